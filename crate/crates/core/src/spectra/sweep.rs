//! Parameter grids evaluated concurrently, in a fixed row order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{spectrum, ModelFlags, Spectral, SpectrumOptions, SpectrumResult};
use crate::error::{domain, Error, Result};
use crate::operators::SystemParams;
use crate::scalar::Real;

/// A parameter a sweep axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Sets the mass so that `λ` takes the value.
    Lambda,
    Mass,
    Omega,
    Length,
    OmegaPl,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Mass => "mass",
            SweepParameter::Omega => "omega",
            SweepParameter::Length => "length",
            SweepParameter::OmegaPl => "omega_pl",
        }
    }

    /// `params` with this parameter set to `value`.
    pub fn apply<T: Real>(self, params: &SystemParams<T>, value: T) -> Result<SystemParams<T>> {
        let mut out = *params;
        match self {
            SweepParameter::Lambda => return params.with_lambda(value),
            SweepParameter::Mass => out.mass = value,
            SweepParameter::Omega => out.omega = value,
            SweepParameter::Length => out.length = value,
            SweepParameter::OmegaPl => out.omega_pl = Some(value),
        }
        out.validate()?;
        Ok(out)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParameter::Lambda),
            "mass" => Ok(SweepParameter::Mass),
            "omega" => Ok(SweepParameter::Omega),
            "length" => Ok(SweepParameter::Length),
            "omega_pl" => Ok(SweepParameter::OmegaPl),
            other => domain(format!("unknown sweep parameter '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis<T> {
    pub parameter: SweepParameter,
    pub min: T,
    pub max: T,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl<T: Real> SweepAxis<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite()
            && self.max.is_finite()
            && self.min > T::zero()
            && self.max >= self.min)
        {
            return domain(format!(
                "axis {}: need 0 < min <= max, got {}..{}",
                self.parameter, self.min, self.max
            ));
        }
        Ok(())
    }

    /// Grid values from `min` to `max` inclusive.
    pub fn values(&self) -> Result<Vec<T>> {
        self.validate()?;
        if self.count <= 1 {
            return Ok(if self.count == 1 {
                vec![self.min]
            } else {
                Vec::new()
            });
        }
        let steps = T::from_count(self.count - 1);
        Ok((0..self.count)
            .map(|i| {
                let t = T::from_count(i) / steps;
                match self.spacing {
                    Spacing::Linear => self.min + (self.max - self.min) * t,
                    Spacing::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * t).exp(),
                }
            })
            .collect())
    }
}

/// Cartesian product of axes, the first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamGrid<T> {
    pub axes: Vec<SweepAxis<T>>,
}

impl<T: Real> ParamGrid<T> {
    pub fn new(axes: Vec<SweepAxis<T>>) -> Self {
        Self { axes }
    }

    /// Grid points in lexicographic order of axis indices.
    pub fn points(&self) -> Result<Vec<Vec<(SweepParameter, T)>>> {
        if self.axes.is_empty() {
            return Ok(Vec::new());
        }
        let mut points: Vec<Vec<(SweepParameter, T)>> = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values()?;
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.parameter, v));
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone)]
pub struct SweepRow<T: Real> {
    pub index: usize,
    pub coordinates: Vec<(SweepParameter, T)>,
    /// Parameters after applying the coordinates.
    pub params: Option<SystemParams<T>>,
    pub outcome: std::result::Result<SpectrumResult<T>, Error>,
}

/// Evaluates every grid point; failures are kept in their rows.
pub fn sweep<T: Spectral>(
    base: &SystemParams<T>,
    flags: ModelFlags,
    grid: &ParamGrid<T>,
    options: &SpectrumOptions,
) -> Result<Vec<SweepRow<T>>> {
    let points = grid.points()?;
    Ok(points
        .into_par_iter()
        .enumerate()
        .map(|(index, coordinates)| {
            let params = coordinates
                .iter()
                .try_fold(*base, |p, &(name, value)| name.apply(&p, value));
            let outcome = params
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|p| spectrum(p, flags, options));
            SweepRow {
                index,
                coordinates,
                params: params.ok(),
                outcome,
            }
        })
        .collect())
}

/// Least-squares slope of `ln|y|` against `ln x`.
pub fn fit_loglog_slope<T: Real>(xs: &[T], ys: &[T]) -> Result<T> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return domain("slope fit needs at least two paired samples");
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite())
        || xs.iter().any(|&x| x <= T::zero())
        || ys.iter().any(|y| y.is_zero())
    {
        return domain("slope fit needs positive abscissae and nonzero ordinates");
    }
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.abs().ln()).collect();
    let n = T::from_count(xs.len());
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let sxy: T = lx.iter().zip(&ly).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = lx.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx.is_zero() {
        return domain("slope fit needs distinct abscissae");
    }
    Ok(sxy / sxx)
}
