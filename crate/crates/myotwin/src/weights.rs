//! Versioned plain-text weights format.
//!
//! ```text
//! myotwin-weights 1
//! dims 6 6 2
//! seed 1
//! scaler stiffness <offset> <scale>
//! scaler orientation_deg <offset> <scale>
//! w_in
//! <6 rows of 6 values>
//! w_out
//! <2 rows of 6 values>
//! ```
//!
//! Values are row-major in shortest round-trip decimal form.

use std::fmt::Write as _;

use myotwin_core::estimator::{Affine, NetworkWeights, TargetScaler, HIDDEN, OUTPUTS};
use myotwin_core::MUSCLES;
use thiserror::Error;

pub const MAGIC: &str = "myotwin-weights";
pub const VERSION: u32 = 1;
pub const WEIGHTS_FILE: &str = "weights.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub seed: u64,
    pub scaler: TargetScaler,
    pub weights: NetworkWeights,
}

#[derive(Debug, Error, PartialEq)]
#[error("weights line {line}: {msg}")]
pub struct WeightsError {
    pub line: usize,
    pub msg: String,
}

fn row(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(f64::to_string).collect();
    out.push_str(&cells.join(" "));
    out.push('\n');
}

pub fn to_text(f: &WeightsFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "dims {MUSCLES} {HIDDEN} {OUTPUTS}");
    let _ = writeln!(s, "seed {}", f.seed);
    let _ = writeln!(s, "scaler stiffness {} {}", f.scaler.stiffness.offset, f.scaler.stiffness.scale);
    let _ = writeln!(s, "scaler orientation_deg {} {}", f.scaler.orientation.offset, f.scaler.orientation.scale);
    s.push_str("w_in\n");
    for r in &f.weights.w_in {
        row(&mut s, r);
    }
    s.push_str("w_out\n");
    for r in &f.weights.w_out {
        row(&mut s, r);
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>, WeightsError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(self.err("unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> WeightsError {
        WeightsError {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, words: &[&str]) -> Result<Vec<&'a str>, WeightsError> {
        let t = self.next()?;
        if t.len() < words.len() || t[..words.len()] != *words {
            return Err(self.err(format!("expected `{}`", words.join(" "))));
        }
        Ok(t[words.len()..].to_vec())
    }

    fn floats<const N: usize>(&self, t: &[&str]) -> Result<[f64; N], WeightsError> {
        if t.len() != N {
            return Err(self.err(format!("expected {N} values, found {}", t.len())));
        }
        let mut out = [0.0f64; N];
        for (o, s) in out.iter_mut().zip(t) {
            *o = s.parse().map_err(|_| self.err(format!("bad number `{s}`")))?;
            if !o.is_finite() {
                return Err(self.err("non-finite value"));
            }
        }
        Ok(out)
    }
}

pub fn from_text(text: &str) -> Result<WeightsFile, WeightsError> {
    let mut l = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let v = l.expect(&[MAGIC])?;
    if v != [VERSION.to_string().as_str()] {
        return Err(l.err(format!("unsupported version {v:?}")));
    }
    let dims = l.expect(&["dims"])?;
    let want = [MUSCLES.to_string(), HIDDEN.to_string(), OUTPUTS.to_string()];
    if dims.len() != 3 || dims.iter().zip(&want).any(|(a, b)| a != b) {
        return Err(l.err(format!("dims must be {MUSCLES} {HIDDEN} {OUTPUTS}")));
    }
    let seed = l.expect(&["seed"])?;
    let seed = match seed.as_slice() {
        [s] => s.parse().map_err(|_| l.err("bad seed"))?,
        _ => return Err(l.err("bad seed")),
    };
    let k = l.expect(&["scaler", "stiffness"])?;
    let [ko, ks] = l.floats::<2>(&k)?;
    let th = l.expect(&["scaler", "orientation_deg"])?;
    let [to, ts] = l.floats::<2>(&th)?;
    l.expect(&["w_in"])?;
    let mut w = NetworkWeights::ZERO;
    for r in w.w_in.iter_mut() {
        let t = l.next()?;
        *r = l.floats::<MUSCLES>(&t)?;
    }
    l.expect(&["w_out"])?;
    for r in w.w_out.iter_mut() {
        let t = l.next()?;
        *r = l.floats::<HIDDEN>(&t)?;
    }
    if let Ok(extra) = l.next() {
        return Err(l.err(format!("trailing content `{}`", extra.join(" "))));
    }
    Ok(WeightsFile {
        seed,
        scaler: TargetScaler {
            stiffness: Affine { offset: ko, scale: ks },
            orientation: Affine { offset: to, scale: ts },
        },
        weights: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsFile {
        WeightsFile {
            seed: 42,
            scaler: TargetScaler::from_ranges((1.0, 7.0), (-45.0, 90.0)).unwrap(),
            weights: NetworkWeights::init(42),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = sample();
        let text = to_text(&f);
        assert!(text.starts_with("myotwin-weights 1\ndims 6 6 2\nseed 42\n"));
        assert_eq!(from_text(&text).unwrap(), f);
    }

    #[test]
    fn rejects_wrong_version_and_dims() {
        let text = to_text(&sample());
        let e = from_text(&text.replacen("myotwin-weights 1", "myotwin-weights 9", 1)).unwrap_err();
        assert_eq!(e.line, 1);
        let e = from_text(&text.replacen("dims 6 6 2", "dims 6 8 2", 1)).unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn rejects_short_rows_and_trailing_text() {
        let text = to_text(&sample());
        let mut lines: Vec<&str> = text.lines().collect();
        lines[6] = "0.1 0.2";
        let e = from_text(&lines.join("\n")).unwrap_err();
        assert_eq!(e.line, 7);
        let e = from_text(&format!("{text}extra\n")).unwrap_err();
        assert!(e.msg.contains("trailing"));
    }
}
