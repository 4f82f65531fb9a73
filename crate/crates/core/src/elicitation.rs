//! Sequential utility elicitation against a learned mixture.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::MixtureModel;
use crate::projection::argmax;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Pivot outcomes of a row reduction of the design matrix with partial
/// pivoting, in pivot order.
pub fn select_questions_rref(design: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = design.shape();
    let mut work = design.clone();
    let mut used = vec![false; n];
    let mut picked = Vec::with_capacity(m);
    let tol = 1e-9 * design.amax().max(1.0);
    for c in 0..m {
        let mut best: Option<usize> = None;
        for r in 0..n {
            if used[r] {
                continue;
            }
            if best.is_none_or(|b| work[(r, c)].abs() > work[(b, c)].abs()) {
                best = Some(r);
            }
        }
        let Some(p) = best.filter(|&p| work[(p, c)].abs() > tol) else {
            return Err(Error::RankDeficient { rank: c, cols: m });
        };
        used[p] = true;
        picked.push(p);
        let pivot_row = work.row(p).clone_owned();
        for r in 0..n {
            if !used[r] && work[(r, c)] != 0.0 {
                let f = work[(r, c)] / pivot_row[c];
                for k in c..m {
                    work[(r, k)] -= f * pivot_row[k];
                }
            }
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Rref,
    Variance,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rref" => Ok(Self::Rref),
            "variance" => Ok(Self::Variance),
            other => Err(Error::Malformed(format!("unknown policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub policy: Policy,
    /// Elicitation noise sd used instead of each type's learned one.
    pub noise_sd: Option<f64>,
    pub stop_eps: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Rref,
            noise_sd: None,
            stop_eps: 0.05,
        }
    }
}

/// Answered-outcome sequence and the bit pattern of any noise override.
type CalibrationKey = (Vec<usize>, Option<u64>);

/// Simulation-calibrated outlier thresholds, cached per answered-outcome
/// sequence and noise setting.
#[derive(Debug)]
pub struct OutlierCalibrator {
    pub simulations: usize,
    pub seed: u64,
    cache: Mutex<HashMap<CalibrationKey, f64>>,
}

impl OutlierCalibrator {
    pub fn new(simulations: usize, seed: u64) -> Self {
        Self {
            simulations,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

/// A model prepared for elicitation: per-type question orders and the
/// outlier calibrator. Shared by every session.
#[derive(Debug)]
pub struct ElicitationModel {
    pub model: MixtureModel,
    pub rref: Vec<Vec<usize>>,
    pub calibrator: OutlierCalibrator,
}

impl ElicitationModel {
    pub fn new(model: MixtureModel) -> Result<Arc<Self>> {
        Self::with_calibration(model, 1000, 0x0u64)
    }

    pub fn with_calibration(model: MixtureModel, simulations: usize, seed: u64) -> Result<Arc<Self>> {
        if model.types.is_empty() {
            return Err(Error::Malformed("model has no types".into()));
        }
        let rref = model
            .types
            .iter()
            .map(|t| select_questions_rref(t.design_matrix()))
            .collect::<Result<_>>()?;
        Ok(Arc::new(Self {
            model,
            rref,
            calibrator: OutlierCalibrator::new(simulations, seed),
        }))
    }

    fn noise_var(&self, t: usize, config: &SessionConfig) -> f64 {
        match config.noise_sd {
            Some(sd) => sd * sd,
            None => self.model.types[t].params.noise_var,
        }
    }

    /// Flagging threshold for the prequential score of a session that answered
    /// `sequence` in order: mean plus three standard deviations over
    /// model-sampled sessions.
    pub fn outlier_threshold(&self, sequence: &[usize], config: &SessionConfig) -> Result<f64> {
        let key = (sequence.to_vec(), config.noise_sd.map(f64::to_bits));
        if let Some(t) = self.calibrator.cache.lock().expect("calibrator lock").get(&key) {
            return Ok(*t);
        }
        let mut seed = self.calibrator.seed ^ 0xCBF2_9CE4_8422_2325;
        for &o in sequence {
            seed = (seed ^ o as u64).wrapping_mul(0x0100_0000_01B3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = (0..self.calibrator.simulations.max(2))
            .map(|_| {
                let answers = self.sample_answers(&mut rng, sequence, config)?;
                let mut s = SessionView::new(self, *config);
                for (o, v) in answers {
                    s.update_posterior(o, v)?;
                }
                Ok(s.outlier_score().0)
            })
            .collect::<Result<Vec<f64>>>()?;
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let tau = mean + 3.0 * var.sqrt();
        self.calibrator.cache.lock().expect("calibrator lock").insert(key, tau);
        Ok(tau)
    }

    /// Draw a respondent from the model and answer `sequence` for them.
    pub fn sample_answers(
        &self,
        rng: &mut impl Rng,
        sequence: &[usize],
        config: &SessionConfig,
    ) -> Result<Vec<(usize, f64)>> {
        let pick = WeightedIndex::new(&self.model.theta).map_err(|e| Error::Malformed(e.to_string()))?;
        let t = pick.sample(rng);
        let ty = &self.model.types[t];
        let p = &ty.params;
        let l = linalg::cholesky(&p.cov, "type covariance")?.l();
        let z = DVector::from_fn(p.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &p.mean + l * z;
        let sd = self.noise_var(t, config).sqrt();
        Ok(sequence
            .iter()
            .map(|&o| {
                let u = ty.design_matrix().row(o).dot(&w.transpose());
                (o, u + sd * rng.sample::<f64, _>(StandardNormal))
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub outcome_id: usize,
    pub description: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub outcome_id: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub outcome_id: usize,
    pub value: f64,
}

/// Everything needed to rebuild a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub model_id: String,
    pub config: SessionConfig,
    pub answers: Vec<Answer>,
}

#[derive(Debug, Clone)]
struct TypeState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Session {
    model: Arc<ElicitationModel>,
    pub config: SessionConfig,
    answers: Vec<Answer>,
    answered: Vec<bool>,
    states: Vec<TypeState>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    /// Mixture log predictive density of each answer given the earlier ones.
    prequential: Vec<f64>,
}

impl Session {
    pub fn new(model: Arc<ElicitationModel>, config: SessionConfig) -> Self {
        let m = &model.model;
        let states = m
            .types
            .iter()
            .map(|t| TypeState {
                mean: t.params.mean.clone(),
                cov: t.params.cov.clone(),
            })
            .collect();
        let log_weights = m.theta.iter().map(|t| t.ln()).collect();
        let weights = m.theta.clone();
        let answered = vec![false; m.domain.num_outcomes()];
        Self {
            model,
            config,
            answers: vec![],
            answered,
            states,
            log_weights,
            weights,
            prequential: vec![],
        }
    }

    pub fn replay(model: Arc<ElicitationModel>, config: SessionConfig, answers: &[Answer]) -> Result<Self> {
        let mut s = Self::new(model, config);
        for a in answers {
            s.update_posterior(a.outcome_id, a.value)?;
        }
        Ok(s)
    }

    pub fn model(&self) -> &Arc<ElicitationModel> {
        &self.model
    }

    pub fn answers(&self) -> &[Answer] {
        &self.answers
    }

    pub fn type_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn posterior(&self, t: usize) -> (&DVector<f64>, &DMatrix<f64>) {
        (&self.states[t].mean, &self.states[t].cov)
    }

    pub fn is_answered(&self, outcome: usize) -> bool {
        self.answered.get(outcome).copied().unwrap_or(false)
    }

    pub fn log(&self, model_id: &str) -> SessionLog {
        SessionLog {
            model_id: model_id.to_string(),
            config: self.config,
            answers: self.answers.clone(),
        }
    }

    pub fn update_posterior(&mut self, outcome: usize, value: f64) -> Result<()> {
        let n = self.answered.len();
        if outcome >= n {
            return Err(Error::OutcomeOutOfRange {
                index: outcome,
                size: n,
            });
        }
        if !value.is_finite() {
            return Err(Error::Malformed(format!("non-finite answer {value}")));
        }
        if self.answered[outcome] {
            return Err(Error::RepeatedOutcome(outcome));
        }
        // work on copies so a failed update leaves the session untouched
        let mut states = self.states.clone();
        let mut log_weights = self.log_weights.clone();
        let z = condition_all(&self.model, &self.config, &mut states, &mut log_weights, outcome, value)?;
        self.states = states;
        self.log_weights = log_weights;
        self.weights = self.log_weights.iter().map(|l| l.exp()).collect();
        let s: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
        self.prequential.push(z);
        self.answered[outcome] = true;
        self.answers.push(Answer {
            outcome_id: outcome,
            value,
        });
        Ok(())
    }

    fn unanswered(&self) -> Vec<usize> {
        (0..self.answered.len()).filter(|&o| !self.answered[o]).collect()
    }

    /// Per-type predictive mean and covariance of the noiseless utilities over
    /// `outcomes`.
    fn type_predictive(&self, t: usize, outcomes: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let a = self.model.model.types[t].design_matrix().select_rows(outcomes);
        let st = &self.states[t];
        let mean = &a * &st.mean;
        let cov = &a * &st.cov * a.transpose();
        (mean, cov)
    }

    /// Mixture predictive over the unanswered outcomes; `with_noise` adds each
    /// type's elicitation noise.
    fn mixture_predictive(&self, with_noise: bool) -> Vec<Prediction> {
        let outs = self.unanswered();
        let mut mean = vec![0.0; outs.len()];
        let mut parts = vec![];
        for t in 0..self.states.len() {
            let (m, c) = self.type_predictive(t, &outs);
            for (i, x) in m.iter().enumerate() {
                mean[i] += self.weights[t] * x;
            }
            parts.push((m, c));
        }
        outs.iter()
            .enumerate()
            .map(|(i, &o)| {
                let mut var = 0.0;
                for (t, (m, c)) in parts.iter().enumerate() {
                    let noise = if with_noise {
                        self.model.noise_var(t, &self.config)
                    } else {
                        0.0
                    };
                    var += self.weights[t] * (c[(i, i)].max(0.0) + noise + (m[i] - mean[i]).powi(2));
                }
                Prediction {
                    outcome_id: o,
                    mean: mean[i],
                    stddev: var.sqrt(),
                }
            })
            .collect()
    }

    pub fn predict(&self) -> Vec<Prediction> {
        self.mixture_predictive(true)
    }

    /// True once every unanswered outcome's noiseless utility is pinned down to
    /// within `eps` standard deviation.
    pub fn stop_check_at(&self, eps: f64) -> bool {
        self.mixture_predictive(false).iter().all(|p| p.stddev < eps)
    }

    pub fn stop_check(&self) -> bool {
        self.stop_check_at(self.config.stop_eps)
    }

    /// `sum_t w_t sum_{o'} P_t[o', o]^2 / P_t[o, o]` for every unanswered `o`,
    /// with `P_t` the type's predictive covariance of the observed answers.
    pub fn variance_scores(&self) -> Vec<(usize, f64)> {
        let outs = self.unanswered();
        let mut scores = vec![0.0; outs.len()];
        for t in 0..self.states.len() {
            let (_, mut p) = self.type_predictive(t, &outs);
            let noise = self.model.noise_var(t, &self.config);
            for i in 0..outs.len() {
                p[(i, i)] = p[(i, i)].max(0.0) + noise;
            }
            for (j, s) in scores.iter_mut().enumerate() {
                let pjj = p[(j, j)];
                if pjj > 0.0 {
                    *s += self.weights[t] * p.column(j).norm_squared() / pjj;
                }
            }
        }
        outs.into_iter().zip(scores).collect()
    }

    pub fn most_probable_type(&self) -> usize {
        argmax(&self.weights)
    }

    pub fn next_question(&self) -> Option<Question> {
        if self.stop_check() {
            return None;
        }
        let scores = self.variance_scores();
        let variance_pick = || {
            let mut best: Option<(usize, f64)> = None;
            for &(o, s) in &scores {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((o, s));
                }
            }
            best
        };
        let pick = match self.config.policy {
            Policy::Variance => variance_pick(),
            Policy::Rref => self.model.rref[self.most_probable_type()]
                .iter()
                .find(|&&o| !self.answered[o])
                .map(|&o| {
                    let s = scores.iter().find(|(x, _)| *x == o).map_or(0.0, |(_, s)| *s);
                    (o, s)
                })
                .or_else(variance_pick),
        };
        pick.map(|(o, score)| Question {
            outcome_id: o,
            description: self.model.model.domain.describe(o),
            score,
        })
    }

    /// Negative mean prequential log density of the answers so far.
    pub fn outlier_score(&self) -> (f64, usize) {
        if self.prequential.is_empty() {
            return (0.0, 0);
        }
        let n = self.prequential.len();
        (-self.prequential.iter().sum::<f64>() / n as f64, n)
    }

    pub fn outlier(&self) -> Result<(f64, bool)> {
        let (score, n) = self.outlier_score();
        if n == 0 {
            return Ok((score, false));
        }
        let seq: Vec<usize> = self.answers.iter().map(|a| a.outcome_id).collect();
        let tau = self.model.outlier_threshold(&seq, &self.config)?;
        Ok((score, score > tau))
    }
}

/// Minimal session used inside calibration, borrowing the model.
struct SessionView<'a> {
    model: &'a ElicitationModel,
    config: SessionConfig,
    states: Vec<TypeState>,
    log_weights: Vec<f64>,
    prequential: Vec<f64>,
}

impl<'a> SessionView<'a> {
    fn new(model: &'a ElicitationModel, config: SessionConfig) -> Self {
        Self {
            states: model
                .model
                .types
                .iter()
                .map(|t| TypeState {
                    mean: t.params.mean.clone(),
                    cov: t.params.cov.clone(),
                })
                .collect(),
            log_weights: model.model.theta.iter().map(|t| t.ln()).collect(),
            model,
            config,
            prequential: vec![],
        }
    }

    fn update_posterior(&mut self, outcome: usize, value: f64) -> Result<()> {
        let z = condition_all(
            self.model,
            &self.config,
            &mut self.states,
            &mut self.log_weights,
            outcome,
            value,
        )?;
        self.prequential.push(z);
        Ok(())
    }

    fn outlier_score(&self) -> (f64, usize) {
        let n = self.prequential.len().max(1);
        (-self.prequential.iter().sum::<f64>() / n as f64, n)
    }
}

/// Condition every type on one answer and reweight the types; returns the
/// mixture log predictive density of the answer.
fn condition_all(
    model: &ElicitationModel,
    config: &SessionConfig,
    states: &mut [TypeState],
    log_weights: &mut [f64],
    outcome: usize,
    value: f64,
) -> Result<f64> {
    let mut joint = Vec::with_capacity(states.len());
    for (t, st) in states.iter_mut().enumerate() {
        let noise = model.noise_var(t, config);
        let d = kalman_update(st, model.model.types[t].design_matrix(), outcome, value, noise)?;
        joint.push(log_weights[t] + d);
    }
    let z = linalg::log_sum_exp(&joint);
    if !z.is_finite() {
        return Err(Error::DegenerateEvidence(format!("answer for outcome {outcome}")));
    }
    for (w, j) in log_weights.iter_mut().zip(joint) {
        *w = j - z;
    }
    Ok(z)
}

/// Condition one type's weight posterior on a noisy scalar answer; returns the
/// log predictive density of the answer.
fn kalman_update(st: &mut TypeState, design: &DMatrix<f64>, outcome: usize, value: f64, noise_var: f64) -> Result<f64> {
    let a = design.row(outcome).transpose();
    let g = &st.cov * &a;
    let s = a.dot(&g).max(0.0) + noise_var;
    if !(s > 0.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "predictive variance of outcome {outcome}"
        )));
    }
    let resid = value - a.dot(&st.mean);
    st.mean += &g * (resid / s);
    st.cov -= (&g * g.transpose()) / s;
    linalg::symmetrize(&mut st.cov);
    Ok(-0.5 * (LN_2PI + s.ln() + resid * resid / s))
}
