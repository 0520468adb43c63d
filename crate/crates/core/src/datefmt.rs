//! Date formats of the form `dd/MM/yyyy`.
//!
//! A format is a run of literal characters and tokens. Tokens are runs of a
//! repeated ASCII letter; only `dd`, `MM` and `yyyy` are recognised. A
//! backslash makes the next character literal.

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DateFormatError {
    #[error("unknown date token {0:?}")]
    UnknownToken(String),
    #[error("dangling escape at end of date format")]
    DanglingEscape,
}

pub fn format_date(format: &str, date: NaiveDate) -> Result<String, DateFormatError> {
    let chars: Vec<char> = format.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\\' {
            let next = chars.get(i + 1).ok_or(DateFormatError::DanglingEscape)?;
            out.push(*next);
            i += 2;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let run = chars[i..].iter().take_while(|&&x| x == c).count();
            let token: String = chars[i..i + run].iter().collect();
            match token.as_str() {
                "dd" => out.push_str(&format!("{:02}", date.day())),
                "MM" => out.push_str(&format!("{:02}", date.month())),
                "yyyy" => out.push_str(&format!("{:04}", date.year())),
                _ => return Err(DateFormatError::UnknownToken(token)),
            }
            i += run;
            continue;
        }
        out.push(c);
        i += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d() -> NaiveDate {
        NaiveDate::from_ymd_opt(2006, 3, 7).unwrap()
    }

    #[test]
    fn formats() {
        assert_eq!(format_date("dd/MM/yyyy", d()).unwrap(), "07/03/2006");
        assert_eq!(format_date(r"dd\.MM\.yyyy", d()).unwrap(), "07.03.2006");
        assert_eq!(format_date("yyyy-MM-dd", d()).unwrap(), "2006-03-07");
        assert_eq!(format_date("ddMMyyyy", d()).unwrap(), "07032006");
        assert_eq!(format_date(r"\d\d dd", d()).unwrap(), "dd 07");
    }

    #[test]
    fn rejects_unknown_tokens() {
        assert_eq!(format_date("QQ", d()), Err(DateFormatError::UnknownToken("QQ".into())));
        assert!(format_date("d/M/yy", d()).is_err());
        assert_eq!(format_date("dd\\", d()), Err(DateFormatError::DanglingEscape));
    }
}
