use adwatch_core::html::parse_html;
use adwatch_core::rules::{extract_records, nsl_to_advert, parse_rules, Nsl};
use adwatch_testkit::{naive_strip, random_document, rng};
use chrono::{NaiveDate, TimeZone, Utc};

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strings(nsl: &Nsl, out: &mut Vec<String>) {
    match nsl {
        Nsl::Str(s) => out.push(s.clone()),
        Nsl::List(items) => items.iter().for_each(|i| strings(i, out)),
    }
}

#[test]
fn extracted_values_come_from_page_text() {
    let rules = parse_rules(
        r#"
        category a { list: elem(div) + elem(li) t = elem(b) n = pat("[0-9][0-9,]*") w = pcdata()[0] }
        category b { list: elem(p) !inside elem(table) t = seq("b #pcdata") d = pat("{today}") }
        "#,
    )
    .unwrap();
    let today = NaiveDate::from_ymd_opt(2006, 3, 7).unwrap();
    let seen = Utc.with_ymd_and_hms(2006, 3, 7, 0, 0, 0).unwrap();
    let mut r = rng(77);
    let mut values = 0;
    for _ in 0..300 {
        let doc = random_document(&mut r, 50);
        let page = parse_html(&doc, "http://h/");
        let text: String = naive_strip(&doc).into_iter().map(|(c, _)| c).collect();
        let flat = collapse(&text);
        for rule in &rules.categories {
            let Ok(records) = extract_records(&page, rule, today) else { continue };
            for record in &records {
                let mut found = Vec::new();
                strings(record, &mut found);
                for s in found {
                    assert!(text.contains(&s), "{s:?} not in text of {doc:?}");
                    values += 1;
                }
                let advert = nsl_to_advert(record, rule, "http://h/", seen).unwrap();
                for v in advert.fields.values() {
                    assert!(flat.contains(v.as_str()), "{v:?} not in {flat:?}");
                }
            }
        }
    }
    assert!(values > 200, "only {values} values checked");
}
