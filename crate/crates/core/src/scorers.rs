//! Scoring functions and their analytic gradients.
//!
//! Vector layouts (nominal dimension `d`):
//!
//! | family   | entity            | relation          |
//! |----------|-------------------|-------------------|
//! | TransE   | `d` reals         | `d` reals         |
//! | DistMult | `d` reals         | `d` reals         |
//! | ComplEx  | `d` re ++ `d` im  | `d` re ++ `d` im  |
//! | RotatE   | `d` re ++ `d` im  | `d` phases        |
//!
//! TransE and RotatE are distances (`f >= 0`, lower is more plausible);
//! DistMult and ComplEx are matching scores (higher is more plausible).
//! [`plausibility`] puts both on the same "higher is better" axis.
//!
//! Inputs may be `f32` or `f64`; all arithmetic is done in `f64`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    TransE,
    RotatE,
    DistMult,
    ComplEx,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::TransE, Family::RotatE, Family::DistMult, Family::ComplEx];

    /// Distance families are trained with the margin loss.
    pub fn is_distance(self) -> bool {
        matches!(self, Family::TransE | Family::RotatE)
    }

    pub fn entity_width(self, dim: usize) -> usize {
        match self {
            Family::TransE | Family::DistMult => dim,
            Family::RotatE | Family::ComplEx => 2 * dim,
        }
    }

    pub fn relation_width(self, dim: usize) -> usize {
        match self {
            Family::TransE | Family::DistMult | Family::RotatE => dim,
            Family::ComplEx => 2 * dim,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::TransE => "transe",
            Family::RotatE => "rotate",
            Family::DistMult => "distmult",
            Family::ComplEx => "complex",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transe" => Ok(Family::TransE),
            "rotate" => Ok(Family::RotatE),
            "distmult" => Ok(Family::DistMult),
            "complex" => Ok(Family::ComplEx),
            other => Err(Error::InvalidArgument(format!("unknown family {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            other => Err(Error::InvalidArgument(format!("unknown norm {other:?}"))),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
        })
    }
}

/// A scoring function together with its norm and margin.
///
/// `norm` is ignored by the matching families; `gamma` only enters the
/// distance-family loss and initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreFamily {
    pub family: Family,
    pub norm: Norm,
    pub gamma: f64,
}

impl ScoreFamily {
    pub fn new(family: Family, norm: Norm, gamma: f64) -> Self {
        ScoreFamily { family, norm, gamma }
    }

    pub fn score<A, B, C>(&self, h: &[A], r: &[B], t: &[C]) -> Result<f64>
    where
        A: Copy + Into<f64>,
        B: Copy + Into<f64>,
        C: Copy + Into<f64>,
    {
        score(self.family, self.norm, h, r, t)
    }

    pub fn plausibility(&self, f: f64) -> f64 {
        plausibility(self.family, f)
    }
}

/// Maps a raw score onto a "higher is more plausible" axis.
#[inline]
pub fn plausibility(family: Family, f: f64) -> f64 {
    if family.is_distance() {
        -f
    } else {
        f
    }
}

fn check_layout(family: Family, h: usize, r: usize, t: usize) -> Result<usize> {
    let ok = h == t
        && match family {
            Family::TransE | Family::DistMult => r == h,
            Family::ComplEx => h.is_multiple_of(2) && r == h,
            Family::RotatE => h.is_multiple_of(2) && 2 * r == h,
        };
    if !ok || h == 0 {
        return Err(Error::InvalidArgument(format!(
            "vector lengths h={h}, r={r}, t={t} do not fit the {family} layout"
        )));
    }
    Ok(match family {
        Family::TransE | Family::DistMult => h,
        Family::ComplEx | Family::RotatE => h / 2,
    })
}

#[inline]
fn v<T: Copy + Into<f64>>(xs: &[T], i: usize) -> f64 {
    xs[i].into()
}

/// Raw score `f(h, r, t)`.
pub fn score<A, B, C>(family: Family, norm: Norm, h: &[A], r: &[B], t: &[C]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
    C: Copy + Into<f64>,
{
    let d = check_layout(family, h.len(), r.len(), t.len())?;
    Ok(match family {
        Family::TransE => {
            let res = (0..d).map(|i| v(h, i) + v(r, i) - v(t, i));
            match norm {
                Norm::L1 => res.map(f64::abs).sum(),
                Norm::L2 => res.map(|x| x * x).sum::<f64>().sqrt(),
            }
        }
        Family::RotatE => {
            let sq = (0..d).map(|i| {
                let (re, im) = rotate_residual(h, r, t, d, i);
                re * re + im * im
            });
            match norm {
                Norm::L1 => sq.map(f64::sqrt).sum(),
                Norm::L2 => sq.sum::<f64>().sqrt(),
            }
        }
        Family::DistMult => (0..d).map(|i| v(r, i) * v(h, i) * v(t, i)).sum(),
        Family::ComplEx => (0..d)
            .map(|i| {
                let (hr, hi) = (v(h, i), v(h, d + i));
                let (rr, ri) = (v(r, i), v(r, d + i));
                let (tr, ti) = (v(t, i), v(t, d + i));
                rr * hr * tr + rr * hi * ti + ri * hr * ti - ri * hi * tr
            })
            .sum(),
    })
}

#[inline]
fn rotate_residual<A, B, C>(h: &[A], r: &[B], t: &[C], d: usize, i: usize) -> (f64, f64)
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
    C: Copy + Into<f64>,
{
    let (s, c) = v(r, i).sin_cos();
    let (hr, hi) = (v(h, i), v(h, d + i));
    (hr * c - hi * s - v(t, i), hr * s + hi * c - v(t, d + i))
}

/// Gradients of `f` with respect to each argument, plus the score itself.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub value: f64,
    pub dh: Vec<f64>,
    pub dr: Vec<f64>,
    pub dt: Vec<f64>,
}

pub fn grad_score<A, B, C>(family: Family, norm: Norm, h: &[A], r: &[B], t: &[C]) -> Result<ScoreGrad>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
    C: Copy + Into<f64>,
{
    let mut dh = vec![0.0; h.len()];
    let mut dr = vec![0.0; r.len()];
    let mut dt = vec![0.0; t.len()];
    let value = accumulate_grad(family, norm, h, r, t, 1.0, &mut dh, &mut dr, &mut dt)?;
    Ok(ScoreGrad { value, dh, dr, dt })
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adds `coef * ∂f/∂(h, r, t)` into the output buffers and returns `f`.
///
/// Kinks: an L1 coordinate with zero residual contributes subgradient 0; an
/// L2 distance with zero total residual has zero gradient.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_grad<A, B, C>(
    family: Family,
    norm: Norm,
    h: &[A],
    r: &[B],
    t: &[C],
    coef: f64,
    dh: &mut [f64],
    dr: &mut [f64],
    dt: &mut [f64],
) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
    C: Copy + Into<f64>,
{
    let d = check_layout(family, h.len(), r.len(), t.len())?;
    if dh.len() != h.len() || dr.len() != r.len() || dt.len() != t.len() {
        return Err(Error::InvalidArgument("gradient buffer lengths do not match inputs".into()));
    }
    match family {
        Family::TransE => {
            let res: Vec<f64> = (0..d).map(|i| v(h, i) + v(r, i) - v(t, i)).collect();
            let (f, scale) = match norm {
                Norm::L1 => (res.iter().map(|x| x.abs()).sum::<f64>(), 1.0),
                Norm::L2 => {
                    let n = res.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (n, if n > 0.0 { 1.0 / n } else { 0.0 })
                }
            };
            for (i, &x) in res.iter().enumerate() {
                let g = coef
                    * match norm {
                        Norm::L1 => sign0(x),
                        Norm::L2 => x * scale,
                    };
                dh[i] += g;
                dr[i] += g;
                dt[i] -= g;
            }
            Ok(f)
        }
        Family::RotatE => {
            let res: Vec<(f64, f64)> = (0..d).map(|i| rotate_residual(h, r, t, d, i)).collect();
            let f = match norm {
                Norm::L1 => res.iter().map(|(a, b)| a.hypot(*b)).sum::<f64>(),
                Norm::L2 => res.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt(),
            };
            for (i, &(re, im)) in res.iter().enumerate() {
                let denom = match norm {
                    Norm::L1 => re.hypot(im),
                    Norm::L2 => f,
                };
                if denom == 0.0 {
                    continue;
                }
                let (gre, gim) = (coef * re / denom, coef * im / denom);
                let (s, c) = v(r, i).sin_cos();
                let (hr, hi) = (v(h, i), v(h, d + i));
                dh[i] += gre * c + gim * s;
                dh[d + i] += -gre * s + gim * c;
                dr[i] += gre * (-hr * s - hi * c) + gim * (hr * c - hi * s);
                dt[i] -= gre;
                dt[d + i] -= gim;
            }
            Ok(f)
        }
        Family::DistMult => {
            let mut f = 0.0;
            for i in 0..d {
                let (hv, rv, tv) = (v(h, i), v(r, i), v(t, i));
                f += rv * hv * tv;
                dh[i] += coef * rv * tv;
                dr[i] += coef * hv * tv;
                dt[i] += coef * hv * rv;
            }
            Ok(f)
        }
        Family::ComplEx => {
            let mut f = 0.0;
            for i in 0..d {
                let (hr, hi) = (v(h, i), v(h, d + i));
                let (rr, ri) = (v(r, i), v(r, d + i));
                let (tr, ti) = (v(t, i), v(t, d + i));
                f += rr * hr * tr + rr * hi * ti + ri * hr * ti - ri * hi * tr;
                dh[i] += coef * (rr * tr + ri * ti);
                dh[d + i] += coef * (rr * ti - ri * tr);
                dr[i] += coef * (hr * tr + hi * ti);
                dr[d + i] += coef * (hr * ti - hi * tr);
                dt[i] += coef * (rr * hr - ri * hi);
                dt[d + i] += coef * (rr * hi + ri * hr);
            }
            Ok(f)
        }
    }
}
