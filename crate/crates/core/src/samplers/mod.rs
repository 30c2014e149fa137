//! Sampling (noise to data) and inversion (data to noise) drivers.

mod steps;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coeffs::special::{check_gamma, check_mix};
use crate::format::{fmt_g17, CsvTable};
use crate::predictor::NoisePredictor;
use crate::schedule::NoiseSchedule;
use crate::{BelmError, Result};

pub use steps::{
    bdia_invert_step, bdia_step, belm_reverse_xbar, belm_step_xbar, ddim_invert_step, ddim_step,
    edict_invert_step, edict_step, obelm2_invert_step, obelm2_step, obelm3_invert_step,
    obelm3_step,
};

/// Largest step count accepted for the three-step method.
pub const OBELM3_MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Method {
    Ddim,
    Edict { p: f64 },
    Bdia { gamma: f64 },
    Obelm2,
    Obelm3,
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Edict { p } => check_mix(p),
            Method::Bdia { gamma } => check_gamma(gamma),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ddim => "ddim",
            Method::Edict { .. } => "edict",
            Method::Bdia { .. } => "bdia",
            Method::Obelm2 => "obelm2",
            Method::Obelm3 => "obelm3",
        }
    }

    /// Number of stored states a step consumes.
    pub fn history(&self) -> usize {
        match self {
            Method::Ddim | Method::Edict { .. } => 1,
            Method::Bdia { .. } | Method::Obelm2 => 2,
            Method::Obelm3 => 3,
        }
    }

    /// Whether inversion reproduces the stored states up to rounding.
    pub fn is_exactly_invertible(&self) -> bool {
        match *self {
            Method::Ddim => false,
            Method::Bdia { gamma } => gamma > 0.0,
            _ => true,
        }
    }
}

impl fmt::Display for Method {
    /// Compact label such as `bdia(gamma=0.5)`, free of commas.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::Edict { p } => write!(f, "edict(p={p})"),
            Method::Bdia { gamma } => write!(f, "bdia(gamma={gamma})"),
            _ => f.write_str(self.name()),
        }
    }
}

/// States `x_0 ..= x_N` in index order, plus EDICT's coupled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub states: Vec<Vec<f64>>,
    /// `y_0 ..= y_N`, present exactly for EDICT.
    pub aux: Option<Vec<Vec<f64>>>,
    /// Set when inversion had to synthesise a starting value.
    pub approximate: bool,
    pub schedule: NoiseSchedule,
}

impl Trajectory {
    pub fn data_end(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn noise_end(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// Table with `step_index, sbar, x_0..x_{d-1}` and, for EDICT,
    /// `y_0..y_{d-1}`; one row per state in increasing index order.
    pub fn to_table(&self) -> CsvTable {
        let d = self.states[0].len();
        let mut header = vec!["step_index".to_string(), "sbar".to_string()];
        header.extend((0..d).map(|k| format!("x_{k}")));
        if self.aux.is_some() {
            header.extend((0..d).map(|k| format!("y_{k}")));
        }
        let mut table = CsvTable::new(header);
        for (i, x) in self.states.iter().enumerate() {
            let mut row = vec![i.to_string(), fmt_g17(self.schedule.sbar(i))];
            row.extend(x.iter().map(|v| fmt_g17(*v)));
            if let Some(aux) = &self.aux {
                row.extend(aux[i].iter().map(|v| fmt_g17(*v)));
            }
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> String {
        self.to_table().render()
    }
}

/// Starting values for inversion. Only the fields the method needs are read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InversionSeed {
    pub x0: Vec<f64>,
    pub x1: Option<Vec<f64>>,
    pub x2: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
}

impl InversionSeed {
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            x0,
            ..Self::default()
        }
    }

    /// The states a sampled trajectory must retain for exact inversion.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let pick = |i: usize| {
            (traj.method.history() > i && traj.states.len() > i).then(|| traj.states[i].clone())
        };
        Self {
            x0: traj.states[0].clone(),
            x1: pick(1),
            x2: pick(2),
            y0: traj.aux.as_ref().map(|y| y[0].clone()),
        }
    }

    /// Reads the rows with `step_index` 0, 1 and 2 of a trajectory CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| BelmError::Config("empty trajectory file".into()))?
            .split(',')
            .collect();
        let cols = |prefix: &str| -> Vec<usize> {
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| {
                    h.starts_with(prefix) && h[prefix.len()..].parse::<usize>().is_ok()
                })
                .map(|(k, _)| k)
                .collect()
        };
        let (xs, ys) = (cols("x_"), cols("y_"));
        if header.first() != Some(&"step_index") || xs.is_empty() {
            return Err(BelmError::Config(
                "trajectory CSV needs step_index and x_ columns".into(),
            ));
        }
        let mut seed = Self::default();
        let mut found_x0 = false;
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            let parse = |k: usize| -> Result<f64> {
                cells.get(k).and_then(|c| c.parse().ok()).ok_or_else(|| {
                    BelmError::Config(format!("bad number in trajectory row {}", lineno + 2))
                })
            };
            let idx: usize = cells[0].parse().map_err(|_| {
                BelmError::Config(format!("bad step_index in trajectory row {}", lineno + 2))
            })?;
            let row = |which: &[usize]| which.iter().map(|&k| parse(k)).collect::<Result<Vec<_>>>();
            match idx {
                0 => {
                    seed.x0 = row(&xs)?;
                    found_x0 = true;
                    if !ys.is_empty() {
                        seed.y0 = Some(row(&ys)?);
                    }
                }
                1 => seed.x1 = Some(row(&xs)?),
                2 => seed.x2 = Some(row(&xs)?),
                _ => {}
            }
        }
        if !found_x0 {
            return Err(BelmError::Config(
                "trajectory CSV has no step_index 0 row".into(),
            ));
        }
        Ok(seed)
    }
}

fn ensure_finite(method: &Method, i: usize, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BelmError::NumericalFailure(format!(
            "{method} produced a non-finite state at index {i}"
        )))
    }
}

fn check_inputs<P: NoisePredictor + ?Sized>(
    method: &Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    x: &[f64],
) -> Result<()> {
    method.validate()?;
    if x.len() != predictor.dim() {
        return Err(BelmError::Config(format!(
            "state has dimension {} but the predictor expects {}",
            x.len(),
            predictor.dim()
        )));
    }
    if *method == Method::Obelm3 && schedule.steps() > OBELM3_MAX_STEPS {
        return Err(BelmError::Config(format!(
            "obelm3 is limited to N <= {OBELM3_MAX_STEPS}, got {}",
            schedule.steps()
        )));
    }
    Ok(())
}

/// Runs the method from `x_N` down to `x_0`. Multistep methods bootstrap
/// their extra starting values with DDIM steps.
pub fn sample<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    x_n: &[f64],
) -> Result<Trajectory> {
    check_inputs(&method, predictor, schedule, x_n)?;
    let n = schedule.steps();
    let mut starts = vec![x_n.to_vec()];
    if let Method::Edict { .. } = method {
        starts.push(x_n.to_vec());
    } else {
        let bootstrap = method.history().min(n + 1) - 1;
        for step in 0..bootstrap {
            let next = ddim_step(predictor, schedule, &starts[step], n - step);
            ensure_finite(&method, n - step - 1, &next)?;
            starts.push(next);
        }
    }
    sample_from_starts(method, predictor, schedule, starts)
}

/// Continues sampling from explicit starting values: `[x_N, x_{N-1}, ..]`
/// (one per history slot), or `[x_N, y_N]` for EDICT.
pub fn sample_from_starts<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    starts: Vec<Vec<f64>>,
) -> Result<Trajectory> {
    let first = starts
        .first()
        .ok_or_else(|| BelmError::Config("at least one starting state is required".into()))?;
    check_inputs(&method, predictor, schedule, first)?;
    let n = schedule.steps();
    let mut states: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    if let Method::Edict { p } = method {
        let [x_n, y_n]: [Vec<f64>; 2] = starts.try_into().map_err(|_| {
            BelmError::Config("edict needs exactly two starting states (x_N, y_N)".into())
        })?;
        let mut aux: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        states[n] = x_n;
        aux[n] = y_n;
        for i in (1..=n).rev() {
            let (x, y) = edict_step(predictor, schedule, p, &states[i], &aux[i], i)?;
            ensure_finite(&method, i - 1, &x)?;
            ensure_finite(&method, i - 1, &y)?;
            states[i - 1] = x;
            aux[i - 1] = y;
        }
        return Ok(Trajectory {
            method,
            states,
            aux: Some(aux),
            approximate: false,
            schedule: schedule.clone(),
        });
    }
    let slots = method.history().min(n + 1);
    if starts.len() != slots {
        return Err(BelmError::Config(format!(
            "{method} on {n} steps needs {slots} starting states, got {}",
            starts.len()
        )));
    }
    for (j, x) in starts.into_iter().enumerate() {
        ensure_finite(&method, n - j, &x)?;
        states[n - j] = x;
    }
    let first_step = n + 1 - slots;
    for i in (1..=first_step).rev() {
        let next = match method {
            Method::Ddim => ddim_step(predictor, schedule, &states[i], i),
            Method::Bdia { gamma } => {
                bdia_step(predictor, schedule, gamma, &states[i + 1], &states[i], i)?
            }
            Method::Obelm2 => obelm2_step(predictor, schedule, &states[i + 1], &states[i], i)?,
            Method::Obelm3 => obelm3_step(
                predictor,
                schedule,
                &states[i + 2],
                &states[i + 1],
                &states[i],
                i,
            )?,
            Method::Edict { .. } => unreachable!("handled above"),
        };
        ensure_finite(&method, i - 1, &next)?;
        states[i - 1] = next;
    }
    Ok(Trajectory {
        method,
        states,
        aux: None,
        approximate: false,
        schedule: schedule.clone(),
    })
}

/// Runs the method from the data end up to `x_N`.
///
/// Missing second (or third) starting values are synthesised with DDIM
/// inversion steps, and a missing `y_0` defaults to `x_0`; either marks the
/// result approximate.
pub fn invert<P: NoisePredictor + ?Sized>(
    method: Method,
    predictor: &P,
    schedule: &NoiseSchedule,
    seed: &InversionSeed,
) -> Result<Trajectory> {
    check_inputs(&method, predictor, schedule, &seed.x0)?;
    if let Method::Bdia { gamma } = method {
        if gamma == 0.0 {
            return Err(BelmError::NotInvertible(
                "bdia with gamma = 0 discards x_(i+1) and cannot be inverted".into(),
            ));
        }
    }
    let n = schedule.steps();
    let mut states: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    states[0] = seed.x0.clone();
    let mut approximate = false;

    if let Method::Edict { p } = method {
        let mut aux: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        aux[0] = match &seed.y0 {
            Some(y) => y.clone(),
            None => {
                approximate = true;
                seed.x0.clone()
            }
        };
        for i in 1..=n {
            let (x, y) = edict_invert_step(predictor, schedule, p, &states[i - 1], &aux[i - 1], i)?;
            ensure_finite(&method, i, &x)?;
            ensure_finite(&method, i, &y)?;
            states[i] = x;
            aux[i] = y;
        }
        return Ok(Trajectory {
            method,
            states,
            aux: Some(aux),
            approximate,
            schedule: schedule.clone(),
        });
    }

    let slots = method.history().min(n + 1);
    let given = [&seed.x1, &seed.x2];
    for j in 1..slots {
        states[j] = match given[j - 1] {
            Some(x) if x.len() == seed.x0.len() => x.clone(),
            Some(_) => {
                return Err(BelmError::Config(format!(
                    "seed x{j} has the wrong dimension"
                )))
            }
            None => {
                approximate = true;
                ddim_invert_step(predictor, schedule, &states[j - 1], j)
            }
        };
        ensure_finite(&method, j, &states[j])?;
    }
    for top in slots..=n {
        let next = match method {
            Method::Ddim => ddim_invert_step(predictor, schedule, &states[top - 1], top),
            Method::Bdia { gamma } => bdia_invert_step(
                predictor,
                schedule,
                gamma,
                &states[top - 2],
                &states[top - 1],
                top - 1,
            )?,
            Method::Obelm2 => obelm2_invert_step(
                predictor,
                schedule,
                &states[top - 2],
                &states[top - 1],
                top - 1,
            )?,
            Method::Obelm3 => obelm3_invert_step(
                predictor,
                schedule,
                &states[top - 3],
                &states[top - 2],
                &states[top - 1],
                top - 2,
            )?,
            Method::Edict { .. } => unreachable!("handled above"),
        };
        ensure_finite(&method, top, &next)?;
        states[top] = next;
    }
    Ok(Trajectory {
        method,
        states,
        aux: None,
        approximate,
        schedule: schedule.clone(),
    })
}

#[cfg(test)]
mod tests;
