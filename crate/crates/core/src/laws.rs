//! Univariate distributions used for mobility fractions and their errors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum Law {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Law::Constant { value } => value.is_finite(),
            Law::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Law::Beta { a, b } => a > 0.0 && b > 0.0,
            Law::Normal { mean, sd } => mean.is_finite() && sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution {self}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Law::Constant { value } => value,
            Law::Uniform { lo, hi } => 0.5 * (lo + hi),
            Law::Beta { a, b } => a / (a + b),
            Law::Normal { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Law::Constant { .. } => 0.0,
            Law::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Law::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Law::Normal { sd, .. } => sd * sd,
        }
    }

    /// Raw second moment `E[X^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            // exact so that Var = E[X^2] - E[X]^2 vanishes identically
            Law::Constant { value } => value * value,
            _ => self.variance() + self.mean().powi(2),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Constant { value } => value,
            Law::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            Law::Beta { a, b } => Beta::new(a, b).expect("validated beta").sample(rng),
            Law::Normal { mean, sd } => {
                if sd == 0.0 {
                    mean
                } else {
                    Normal::new(mean, sd).expect("validated normal").sample(rng)
                }
            }
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Law::Constant { value } => write!(f, "const:{value}"),
            Law::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            Law::Beta { a, b } => write!(f, "beta:{a}:{b}"),
            Law::Normal { mean, sd } => write!(f, "normal:{mean}:{sd}"),
        }
    }
}

/// Parses `const:v`, `uniform:lo:hi`, `beta:a:b` and `normal:mean:sd`.
impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("missing parameter in '{s}'")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("'{s}': {e}")))
        };
        let expect_len = |n: usize| {
            if parts.len() == n {
                Ok(())
            } else {
                Err(Error::Parse(format!("'{s}': expected {} parameters", n - 1)))
            }
        };
        let law = match parts[0].trim().to_ascii_lowercase().as_str() {
            "const" | "constant" => {
                expect_len(2)?;
                Law::Constant { value: num(1)? }
            }
            "uniform" | "unif" => {
                expect_len(3)?;
                Law::Uniform { lo: num(1)?, hi: num(2)? }
            }
            "beta" => {
                expect_len(3)?;
                Law::Beta { a: num(1)?, b: num(2)? }
            }
            "normal" => {
                expect_len(3)?;
                Law::Normal { mean: num(1)?, sd: num(2)? }
            }
            other => return Err(Error::Parse(format!("unknown distribution '{other}'"))),
        };
        law.validate()?;
        Ok(law)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn parses_and_displays() {
        let l: Law = "uniform:0.25:0.75".parse().unwrap();
        assert_eq!(l, Law::Uniform { lo: 0.25, hi: 0.75 });
        assert_eq!(l.to_string().parse::<Law>().unwrap(), l);
        assert!("beta:0:1".parse::<Law>().is_err());
        assert!("gamma:1:1".parse::<Law>().is_err());
        assert!("uniform:1".parse::<Law>().is_err());
    }

    #[test]
    fn moments_match_closed_forms() {
        let u = Law::Uniform { lo: 0.0, hi: 1.0 };
        assert!((u.second_moment() - 1.0 / 3.0).abs() < 1e-15);
        let b = Law::Beta { a: 30.0, b: 10.0 };
        assert!((b.mean() - 0.75).abs() < 1e-15);
        let c = Law::Constant { value: 0.3 };
        assert_eq!(c.second_moment() - c.mean() * c.mean(), 0.0);
    }

    #[test]
    fn sample_moments_agree() {
        let mut rng = substream(11, "laws", 0);
        for law in [
            Law::Beta { a: 2.0, b: 5.0 },
            Law::Uniform { lo: -0.25, hi: 0.25 },
            Law::Normal { mean: 1.0, sd: 0.5 },
        ] {
            let xs: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng)).collect();
            let m = crate::stats::mean(&xs);
            let m2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
            assert!((m - law.mean()).abs() < 5e-3, "{law}: {m}");
            assert!((m2 - law.second_moment()).abs() < 5e-3, "{law}: {m2}");
        }
    }
}
