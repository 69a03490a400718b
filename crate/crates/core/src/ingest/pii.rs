//! Offline detection and redaction of emails, North-American phone numbers,
//! SSNs and Luhn-valid card numbers.

use std::ops::{Add, AddAssign, Range};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static EMAIL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap()
});
static PHONE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\+?1[ .\-]?)?(?:\(\d{3}\) ?|\d{3}[ .\-]?)\d{3}[ .\-]?\d{4}").unwrap()
});
static SSN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d{3}-\d{2}-\d{4}").unwrap());
static CARD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d(?:[ \-]?\d){12,18}").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiiClass {
    Email,
    Phone,
    Ssn,
    CreditCard,
}

impl PiiClass {
    pub const ALL: [PiiClass; 4] = [
        PiiClass::Email,
        PiiClass::Phone,
        PiiClass::Ssn,
        PiiClass::CreditCard,
    ];

    pub fn token(self) -> &'static str {
        match self {
            PiiClass::Email => "[EMAIL]",
            PiiClass::Phone => "[PHONE]",
            PiiClass::Ssn => "[SSN]",
            PiiClass::CreditCard => "[CC]",
        }
    }

    fn regex(self) -> &'static Regex {
        match self {
            PiiClass::Email => &EMAIL,
            PiiClass::Phone => &PHONE,
            PiiClass::Ssn => &SSN,
            PiiClass::CreditCard => &CARD,
        }
    }

    /// Extra checks beyond the pattern: digit classes must not be glued to
    /// surrounding digits, and card numbers must pass Luhn.
    fn accepts(self, text: &str, span: &Range<usize>) -> bool {
        if self == PiiClass::Email {
            return true;
        }
        let before = text[..span.start].chars().next_back();
        let after = text[span.end..].chars().next();
        let glued = |c: Option<char>| c.is_some_and(|c| c.is_ascii_alphanumeric());
        if glued(before) || glued(after) {
            return false;
        }
        match self {
            PiiClass::CreditCard => luhn_valid(&text[span.clone()]),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiiMatch {
    pub class: PiiClass,
    pub span: Range<usize>,
}

/// Per-class redaction counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionReport {
    pub email: u64,
    pub phone: u64,
    pub ssn: u64,
    pub credit_card: u64,
}

impl RedactionReport {
    pub fn total(&self) -> u64 {
        self.email + self.phone + self.ssn + self.credit_card
    }

    fn bump(&mut self, class: PiiClass) {
        match class {
            PiiClass::Email => self.email += 1,
            PiiClass::Phone => self.phone += 1,
            PiiClass::Ssn => self.ssn += 1,
            PiiClass::CreditCard => self.credit_card += 1,
        }
    }
}

impl AddAssign for RedactionReport {
    fn add_assign(&mut self, rhs: Self) {
        self.email += rhs.email;
        self.phone += rhs.phone;
        self.ssn += rhs.ssn;
        self.credit_card += rhs.credit_card;
    }
}

impl Add for RedactionReport {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

/// Luhn checksum over the digits of `s`; separators are ignored.
pub fn luhn_valid(s: &str) -> bool {
    let digits: Vec<u32> = s.chars().filter_map(|c| c.to_digit(10)).collect();
    if digits.is_empty() {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let twice = d * 2;
                if twice > 9 {
                    twice - 9
                } else {
                    twice
                }
            } else {
                d
            }
        })
        .sum();
    sum.is_multiple_of(10)
}

fn candidates(text: &str, class: PiiClass, out: &mut Vec<PiiMatch>) {
    let re = class.regex();
    let mut start = 0;
    while start <= text.len() {
        let Some(m) = re.find_at(text, start) else {
            break;
        };
        let span = m.range();
        if class.accepts(text, &span) {
            start = span.end;
            out.push(PiiMatch { class, span });
        } else {
            // retry from the next character inside the rejected match
            start = span.start + text[span.start..].chars().next().map_or(1, char::len_utf8);
        }
    }
}

/// All non-overlapping PII matches, chosen longest-first at each leftmost position.
pub fn detect_pii(text: &str) -> Vec<PiiMatch> {
    let has_digit = text.bytes().any(|b| b.is_ascii_digit());
    let has_at = text.contains('@');
    if !has_digit && !has_at {
        return Vec::new();
    }
    let mut all = Vec::new();
    for class in PiiClass::ALL {
        if class == PiiClass::Email && !has_at {
            continue;
        }
        if class != PiiClass::Email && !has_digit {
            continue;
        }
        candidates(text, class, &mut all);
    }
    all.sort_by(|a, b| {
        a.span
            .start
            .cmp(&b.span.start)
            .then(b.span.len().cmp(&a.span.len()))
    });
    let mut chosen: Vec<PiiMatch> = Vec::with_capacity(all.len());
    let mut cursor = 0;
    for m in all {
        if m.span.start >= cursor {
            cursor = m.span.end;
            chosen.push(m);
        }
    }
    chosen
}

/// Replace every detected PII substring with its class token.
pub fn scrub_pii(text: &str) -> (String, RedactionReport) {
    let matches = detect_pii(text);
    let mut report = RedactionReport::default();
    if matches.is_empty() {
        return (text.to_owned(), report);
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in matches {
        out.push_str(&text[cursor..m.span.start]);
        out.push_str(m.class.token());
        report.bump(m.class);
        cursor = m.span.end;
    }
    out.push_str(&text[cursor..]);
    (out, report)
}
