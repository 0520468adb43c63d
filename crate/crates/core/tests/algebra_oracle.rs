use adwatch_core::algebra::{self, Hierarchical, Positional, Regional};
use adwatch_core::piece::{Piece, PieceSet};
use adwatch_core::{Page, Span};
use adwatch_testkit::{check_algebra, random_document, rng, HAND_FIXTURES};
use proptest::prelude::*;

#[test]
fn randomized_documents_agree_with_oracles() {
    let mut r = rng(0x5eed);
    let mut checks = 0;
    for _ in 0..200 {
        let doc = random_document(&mut r, 50);
        checks += check_algebra(&doc, &mut r).unwrap_or_else(|e| panic!("{e}"));
    }
    assert!(checks > 10_000, "only {checks} comparisons");
}

#[test]
fn hand_fixtures_agree_with_oracles() {
    let mut r = rng(1);
    for doc in HAND_FIXTURES {
        check_algebra(doc, &mut r).unwrap_or_else(|e| panic!("{e}"));
    }
}

fn spans_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..40, 0usize..40), 0..12)
        .prop_map(|v| v.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect())
}

fn set<'p>(page: &'p Page, spans: &[(usize, usize)]) -> PieceSet<'p> {
    let pieces = spans.iter().map(|&(a, b)| Piece::new(page, Span::new(a, b))).collect();
    PieceSet::new(page, pieces).unwrap()
}

fn as_set(s: &PieceSet) -> std::collections::BTreeSet<Span> {
    s.spans().into_iter().collect()
}

proptest! {
    #[test]
    fn union_laws(a in spans_strategy(), b in spans_strategy(), c in spans_strategy()) {
        let page = Page::parse(&"x".repeat(40), "u");
        let (p, q, r) = (set(&page, &a), set(&page, &b), set(&page, &c));
        let pq = algebra::union(&p, &q).unwrap();
        prop_assert_eq!(&pq, &algebra::union(&q, &p).unwrap());
        let left = algebra::union(&pq, &r).unwrap();
        let right = algebra::union(&p, &algebra::union(&q, &r).unwrap()).unwrap();
        prop_assert_eq!(&left, &right);
        let back = algebra::exclude(&pq, &q).unwrap();
        prop_assert!(as_set(&back).is_subset(&as_set(&p)));
    }

    #[test]
    fn complement_laws(a in spans_strategy(), b in spans_strategy()) {
        let page = Page::parse(&"x".repeat(40), "u");
        let (p, q) = (set(&page, &a), set(&page, &b));
        let pairs = [
            (algebra::positional(&p, &q, Positional::Before).unwrap(), algebra::positional(&p, &q, Positional::NotBefore).unwrap()),
            (algebra::positional(&p, &q, Positional::After).unwrap(), algebra::positional(&p, &q, Positional::NotAfter).unwrap()),
            (algebra::hierarchical(&p, &q, Hierarchical::Inside).unwrap(), algebra::hierarchical(&p, &q, Hierarchical::NotInside).unwrap()),
            (algebra::hierarchical(&p, &q, Hierarchical::Contain).unwrap(), algebra::hierarchical(&p, &q, Hierarchical::NotContain).unwrap()),
            (algebra::regional(&p, &q, Regional::Intersect).unwrap(), algebra::regional(&p, &q, Regional::Without).unwrap()),
        ];
        for (yes, no) in pairs {
            let (ys, ns) = (as_set(&yes), as_set(&no));
            prop_assert!(ys.is_disjoint(&ns));
            prop_assert_eq!(&algebra::union(&yes, &no).unwrap(), &p);
        }
    }
}
