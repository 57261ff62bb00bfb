use std::fmt;
use std::str::FromStr;

use crate::Error;

/// Architecture name: `CNN-<X>` (Q = 1) or `Self-ONN-<Q>-<X>` (Q ≥ 2), with
/// `X` the hidden-layer width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelName {
    pub q_order: usize,
    pub width: usize,
}

impl ModelName {
    pub fn new(q_order: usize, width: usize) -> Self {
        ModelName { q_order, width }
    }

    pub fn is_convolutional(&self) -> bool {
        self.q_order == 1
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q_order == 1 {
            write!(f, "CNN-{}", self.width)
        } else {
            write!(f, "Self-ONN-{}-{}", self.q_order, self.width)
        }
    }
}

fn positive(name: &str, token: &str, reason: &'static str) -> Result<usize, Error> {
    match token.parse::<usize>() {
        Ok(v) if v >= 1 && !token.starts_with('+') => Ok(v),
        _ => Err(Error::NetworkName {
            name: name.to_string(),
            token: token.to_string(),
            reason,
        }),
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let err = |token: &str, reason| Error::NetworkName {
            name: s.to_string(),
            token: token.to_string(),
            reason,
        };
        if let Some(rest) = s.strip_prefix("CNN-") {
            let width = positive(s, rest, "width must be a positive integer")?;
            return Ok(ModelName::new(1, width));
        }
        if let Some(rest) = s.strip_prefix("Self-ONN-") {
            let mut parts = rest.split('-');
            let q = parts.next().unwrap_or_default();
            let Some(width) = parts.next() else {
                return Err(err(rest, "expected Self-ONN-<Q>-<X>; order Q or width X is missing"));
            };
            if let Some(extra) = parts.next() {
                return Err(err(extra, "unexpected trailing component"));
            }
            let q_order = positive(s, q, "order Q must be a positive integer")?;
            if q_order < 2 {
                return Err(err(q, "Self-ONN order must be at least 2; use CNN-<X> for Q = 1"));
            }
            let width = positive(s, width, "width must be a positive integer")?;
            return Ok(ModelName::new(q_order, width));
        }
        let head = s.split('-').next().unwrap_or(s);
        Err(err(head, "expected prefix CNN- or Self-ONN-"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_table_rows() {
        assert_eq!("CNN-64".parse::<ModelName>().unwrap(), ModelName::new(1, 64));
        assert_eq!(
            "Self-ONN-3-128".parse::<ModelName>().unwrap(),
            ModelName::new(3, 128)
        );
    }

    #[test]
    fn rejects_malformed_names() {
        for bad in ["Self-ONN-128", "CNN-", "CNN-0", "Self-ONN-1-64", "RNN-3", "Self-ONN-3-64-1", "CNN-x"] {
            let e = bad.parse::<ModelName>().unwrap_err();
            assert!(matches!(e, Error::NetworkName { .. }), "{bad}");
        }
        match "Self-ONN-128".parse::<ModelName>().unwrap_err() {
            Error::NetworkName { token, .. } => assert_eq!(token, "128"),
            other => panic!("{other}"),
        }
    }

    proptest! {
        #[test]
        fn display_round_trips(q in 1usize..10, width in 1usize..1000) {
            let name = ModelName::new(q, width);
            prop_assert_eq!(name.to_string().parse::<ModelName>().unwrap(), name);
        }
    }
}
