//! Hidden Markov model over worker intentions.
//!
//! States are ordered `[G_1 .. G_g, G_?, G_x]`: one per goal, the undecided
//! state and the irrational state. Emission rows are built online from the
//! filtered validation vector and decoded with renormalized max-product
//! (online Viterbi).

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::{argmax, Scalar};

/// Emission weight of `G_?` in the irrational branch, as `tanh(UNKNOWN_FLOOR)`.
pub const UNKNOWN_FLOOR: f64 = 0.1;
/// Floor for the probability given to a newly added goal.
pub const NEW_GOAL_FLOOR: f64 = 0.1;
/// Soft limit above which estimates are known to degrade.
pub const SOFT_GOAL_LIMIT: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("goal budget exceeded: {requested} goals requested, at most {max} allowed")]
    TooManyGoals { requested: usize, max: usize },
    #[error("cannot remove the last goal")]
    LastGoal,
    #[error("goal index {0} out of range")]
    UnknownGoal(usize),
    #[error("at least one goal is required")]
    NoGoals,
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("all Viterbi scores vanished")]
    ZeroScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams<S> {
    /// Goal to undecided.
    pub alpha: S,
    /// Undecided to each goal.
    pub beta: S,
    /// Undecided to irrational.
    pub gamma: S,
    /// Irrational to undecided.
    pub delta: S,
    /// History length for the windowed mean of `v_hat`.
    pub m_window: usize,
    pub phi_threshold: S,
    /// Backpointer steps kept for path reconstruction.
    pub backpointer_window: usize,
}

impl<S: Scalar> Default for HmmParams<S> {
    fn default() -> Self {
        Self {
            alpha: S::lit(0.5),
            beta: S::lit(0.1),
            gamma: S::lit(0.05),
            delta: S::lit(0.1),
            m_window: 8,
            phi_threshold: S::lit(0.5),
            backpointer_window: 256,
        }
    }
}

impl<S: Scalar> HmmParams<S> {
    pub fn validate(&self) -> Result<(), HmmError> {
        for (name, p) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(p > S::zero() && p < S::one()) {
                return Err(HmmError::Params(format!("{name} must lie in (0, 1)")));
            }
        }
        if self.m_window == 0 {
            return Err(HmmError::Params("m_window must be positive".into()));
        }
        Ok(())
    }
}

/// `floor((1 - gamma) / beta)`, robust to the quotient landing a hair below
/// an integer.
pub fn max_goals<S: Scalar>(params: &HmmParams<S>) -> usize {
    let q = ((S::one() - params.gamma) / params.beta).as_f64();
    let r = q.round();
    if (q - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        q.floor() as usize
    }
}

/// Row-stochastic `(g+2) x (g+2)` transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<S> {
    goals: usize,
    data: Vec<S>,
}

impl<S: Scalar> TransitionMatrix<S> {
    pub fn build(goals: usize, params: &HmmParams<S>) -> Result<Self, HmmError> {
        if goals == 0 {
            return Err(HmmError::NoGoals);
        }
        let max = max_goals(params);
        if goals > max {
            return Err(HmmError::TooManyGoals { requested: goals, max });
        }
        let n = goals + 2;
        let (unknown, irrational) = (goals, goals + 1);
        let mut data = vec![S::zero(); n * n];
        for i in 0..goals {
            data[i * n + i] = S::one() - params.alpha;
            data[i * n + unknown] = params.alpha;
        }
        for j in 0..goals {
            data[unknown * n + j] = params.beta;
        }
        // Zero exactly at the goal-count boundary.
        let stay = S::one() - S::lit(goals as f64) * params.beta - params.gamma;
        data[unknown * n + unknown] = stay.max(S::zero());
        data[unknown * n + irrational] = params.gamma;
        data[irrational * n + unknown] = params.delta;
        data[irrational * n + irrational] = S::one() - params.delta;
        Ok(Self { goals, data })
    }

    pub fn goals(&self) -> usize {
        self.goals
    }

    pub fn states(&self) -> usize {
        self.goals + 2
    }

    pub fn get(&self, from: usize, to: usize) -> S {
        self.data[from * self.states() + to]
    }

    pub fn row(&self, from: usize) -> &[S] {
        let n = self.states();
        &self.data[from * n..(from + 1) * n]
    }
}

/// Which branch produced an emission row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Rational,
    Irrational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRow<S> {
    pub values: Vec<S>,
    pub branch: Branch,
    pub phi: S,
    pub delta: S,
}

/// Gap between the largest and second-largest component; with one goal the
/// missing runner-up counts as zero.
pub fn top_gap<S: Scalar>(v: &[S]) -> S {
    let mut first = S::neg_infinity();
    let mut second = S::neg_infinity();
    for &x in v {
        if x > first {
            second = first;
            first = x;
        } else if x > second {
            second = x;
        }
    }
    if first == S::neg_infinity() {
        return S::zero();
    }
    if second == S::neg_infinity() {
        second = S::zero();
    }
    first - second
}

/// Largest per-goal mean over the history window.
pub fn windowed_phi<S: Scalar>(history: &[Vec<S>], goals: usize) -> S {
    if history.is_empty() {
        return S::zero();
    }
    let n = S::lit(history.len() as f64);
    (0..goals)
        .map(|j| history.iter().fold(S::zero(), |a, h| a + h[j]) / n)
        .fold(S::zero(), S::max)
}

/// Emission row for the newest filtered validation vector. `history` holds
/// the last entries, newest included.
pub fn emission_row<S: Scalar>(v_hat: &[S], history: &[Vec<S>], params: &HmmParams<S>) -> EmissionRow<S> {
    let g = v_hat.len();
    let phi = windowed_phi(history, g);
    let delta = top_gap(v_hat);
    let mut values = vec![S::zero(); g + 2];
    let branch = if phi > params.phi_threshold {
        for (j, &v) in v_hat.iter().enumerate() {
            values[j] = v.tanh();
        }
        values[g] = (S::one() - delta).tanh();
        Branch::Rational
    } else {
        values[g] = S::lit(UNKNOWN_FLOOR).tanh();
        values[g + 1] = (S::one() - phi).tanh();
        Branch::Irrational
    };
    let zeta = values.iter().fold(S::zero(), |a, &x| a + x);
    if zeta > S::zero() {
        for x in &mut values {
            *x = *x / zeta;
        }
    }
    EmissionRow {
        values,
        branch,
        phi,
        delta,
    }
}

/// Decoded state label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "goal")]
pub enum StateLabel {
    Goal(usize),
    Unknown,
    Irrational,
}

impl StateLabel {
    pub fn of(index: usize, goals: usize) -> Self {
        match index {
            i if i < goals => StateLabel::Goal(i),
            i if i == goals => StateLabel::Unknown,
            _ => StateLabel::Irrational,
        }
    }
}

/// Online decoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentionState<S> {
    goals: usize,
    scores: Vec<S>,
    forward: Vec<S>,
    history: VecDeque<Vec<S>>,
    m_window: usize,
    backpointers: VecDeque<Vec<usize>>,
    backpointer_window: usize,
    steps: usize,
}

/// Initial distribution: all mass on `G_?`.
pub fn initial_distribution<S: Scalar>(goals: usize) -> Vec<S> {
    let mut p = vec![S::zero(); goals + 2];
    p[goals] = S::one();
    p
}

impl<S: Scalar> IntentionState<S> {
    pub fn new(goals: usize, params: &HmmParams<S>) -> Result<Self, HmmError> {
        if goals == 0 {
            return Err(HmmError::NoGoals);
        }
        let max = max_goals(params);
        if goals > max {
            return Err(HmmError::TooManyGoals { requested: goals, max });
        }
        Ok(Self {
            goals,
            scores: initial_distribution(goals),
            forward: initial_distribution(goals),
            history: VecDeque::new(),
            m_window: params.m_window,
            backpointers: VecDeque::new(),
            backpointer_window: params.backpointer_window,
            steps: 0,
        })
    }

    pub fn goals(&self) -> usize {
        self.goals
    }

    /// Normalized max-product scores: the intention estimates.
    pub fn probabilities(&self) -> &[S] {
        &self.scores
    }

    /// Normalized forward (sum-product) marginals, kept for comparison.
    pub fn forward_marginals(&self) -> &[S] {
        &self.forward
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn history(&self) -> impl Iterator<Item = &Vec<S>> {
        self.history.iter()
    }

    pub fn argmax(&self) -> StateLabel {
        StateLabel::of(argmax(&self.scores), self.goals)
    }

    /// One online Viterbi step: `s'_j = row_j max_i s_i T_ij`, renormalized.
    pub fn step(&mut self, transition: &TransitionMatrix<S>, row: &[S]) -> Result<(), HmmError> {
        let n = self.goals + 2;
        if transition.states() != n {
            return Err(HmmError::Dimension {
                expected: n,
                got: transition.states(),
            });
        }
        if row.len() != n {
            return Err(HmmError::Dimension {
                expected: n,
                got: row.len(),
            });
        }
        let mut next = vec![S::zero(); n];
        let mut back = vec![0; n];
        let mut fwd = vec![S::zero(); n];
        for j in 0..n {
            let mut best = S::neg_infinity();
            let mut arg = 0;
            let mut sum = S::zero();
            for i in 0..n {
                let t = transition.get(i, j);
                let cand = self.scores[i] * t;
                if cand > best {
                    best = cand;
                    arg = i;
                }
                sum = sum + self.forward[i] * t;
            }
            next[j] = row[j] * best;
            back[j] = arg;
            fwd[j] = row[j] * sum;
        }
        let total = next.iter().fold(S::zero(), |a, &x| a + x);
        if !(total > S::zero()) {
            return Err(HmmError::ZeroScores);
        }
        for x in &mut next {
            *x = *x / total;
        }
        let ftotal = fwd.iter().fold(S::zero(), |a, &x| a + x);
        if ftotal > S::zero() {
            for x in &mut fwd {
                *x = *x / ftotal;
            }
            self.forward = fwd;
        }
        self.scores = next;
        if self.backpointer_window > 0 {
            if self.backpointers.len() == self.backpointer_window {
                self.backpointers.pop_front();
            }
            self.backpointers.push_back(back);
        }
        self.steps += 1;
        Ok(())
    }

    /// Records `v_hat`, builds its emission row and steps the decoder.
    pub fn observe(
        &mut self,
        v_hat: &[S],
        transition: &TransitionMatrix<S>,
        params: &HmmParams<S>,
    ) -> Result<EmissionRow<S>, HmmError> {
        if v_hat.len() != self.goals {
            return Err(HmmError::Dimension {
                expected: self.goals,
                got: v_hat.len(),
            });
        }
        if self.history.len() == self.m_window {
            self.history.pop_front();
        }
        self.history.push_back(v_hat.to_vec());
        let hist: Vec<Vec<S>> = self.history.iter().cloned().collect();
        let row = emission_row(v_hat, &hist, params);
        self.step(transition, &row.values)?;
        Ok(row)
    }

    /// Most probable state sequence over the kept backpointer window, oldest first.
    pub fn most_likely_path(&self) -> Vec<StateLabel> {
        let mut state = argmax(&self.scores);
        let mut path = vec![state];
        for back in self.backpointers.iter().rev() {
            state = back[state];
            path.push(state);
        }
        path.reverse();
        path.into_iter().map(|s| StateLabel::of(s, self.goals)).collect()
    }

    /// Appends a goal state before `G_?` with probability
    /// `max(min_i P(G_i), 0.1)`, then renormalizes.
    pub fn add_goal(&mut self, params: &HmmParams<S>) -> Result<(), HmmError> {
        let max = max_goals(params);
        if self.goals + 1 > max {
            return Err(HmmError::TooManyGoals {
                requested: self.goals + 1,
                max,
            });
        }
        let insert = |p: &mut Vec<S>, goals: usize| {
            let min = p[..goals].iter().copied().fold(S::infinity(), S::min);
            let entry = min.max(S::lit(NEW_GOAL_FLOOR));
            p.insert(goals, entry);
            let total = p.iter().fold(S::zero(), |a, &x| a + x);
            for x in p.iter_mut() {
                *x = *x / total;
            }
        };
        insert(&mut self.scores, self.goals);
        insert(&mut self.forward, self.goals);
        for h in &mut self.history {
            h.push(S::zero());
        }
        // Old backpointers refer to the previous numbering.
        self.backpointers.clear();
        self.goals += 1;
        Ok(())
    }

    /// Drops goal `j`, moving its probability to `G_?`.
    pub fn remove_goal(&mut self, j: usize) -> Result<(), HmmError> {
        if j >= self.goals {
            return Err(HmmError::UnknownGoal(j));
        }
        if self.goals == 1 {
            return Err(HmmError::LastGoal);
        }
        for p in [&mut self.scores, &mut self.forward] {
            let mass = p.remove(j);
            let unknown = self.goals - 1;
            p[unknown] = p[unknown] + mass;
        }
        for h in &mut self.history {
            h.remove(j);
        }
        self.backpointers.clear();
        self.goals -= 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn transition_three_goals() {
        let t = TransitionMatrix::build(3, &HmmParams::<f64>::default()).unwrap();
        assert_eq!(t.row(3), &[0.1, 0.1, 0.1, 1.0 - 3.0 * 0.1 - 0.05, 0.05]);
        assert!((t.get(3, 3) - 0.65).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(t.get(i, i), 0.5);
            assert_eq!(t.get(i, 3), 0.5);
        }
        assert_eq!(t.row(4), &[0.0, 0.0, 0.0, 0.1, 0.9]);
        for i in 0..5 {
            assert!((t.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn goal_budget() {
        let p = HmmParams::<f64>::default();
        assert_eq!(max_goals(&p), 9);
        let t = TransitionMatrix::build(9, &p).unwrap();
        assert!((t.get(9, 9) - 0.05).abs() < 1e-12);
        assert_eq!(
            TransitionMatrix::build(10, &p).unwrap_err(),
            HmmError::TooManyGoals { requested: 10, max: 9 }
        );
        let p = HmmParams::<f64> {
            beta: 0.5,
            gamma: 0.5,
            ..Default::default()
        };
        assert_eq!(max_goals(&p), 1);
        let p = HmmParams::<f64> {
            beta: 0.05,
            gamma: 0.05,
            ..Default::default()
        };
        assert_eq!(max_goals(&p), 19);
        let t = TransitionMatrix::build(19, &p).unwrap();
        assert!(t.get(19, 19) >= 0.0);
        assert!((t.row(19).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let t1 = TransitionMatrix::build(1, &HmmParams::<f64>::default()).unwrap();
        assert_eq!(t1.states(), 3);
    }

    #[test]
    fn emission_examples() {
        let p = HmmParams::<f64>::default();
        let hist = vec![vec![1.0, 0.0]; 8];
        let r = emission_row(&[1.0, 0.0], &hist, &p);
        assert_eq!(r.branch, Branch::Rational);
        assert!(close(&r.values, &[1.0, 0.0, 0.0, 0.0], 1e-15));

        let hist = vec![vec![0.9, 0.4]];
        let r = emission_row(&[0.9, 0.4], &hist, &p);
        let raw = [0.9f64.tanh(), 0.4f64.tanh(), 0.5f64.tanh()];
        let z: f64 = raw.iter().sum();
        assert!(close(&r.values, &[raw[0] / z, raw[1] / z, raw[2] / z, 0.0], 1e-15));
        assert!(close(&r.values, &[0.45958, 0.24379, 0.29652, 0.0], 1e-4));

        let hist = vec![vec![0.0, 0.0]; 8];
        let r = emission_row(&[0.0, 0.0], &hist, &p);
        assert_eq!(r.branch, Branch::Irrational);
        assert!(close(&r.values, &[0.0, 0.0, 0.11570, 0.88430], 5e-5));
    }

    #[test]
    fn phi_uses_available_history() {
        assert_eq!(windowed_phi(&[vec![0.8, 0.1]], 2), 0.8);
        assert!((windowed_phi(&[vec![0.8f64, 0.1], vec![0.2, 0.5]], 2) - 0.5).abs() < 1e-15);
        assert_eq!(top_gap(&[0.7]), 0.7);
    }

    #[test]
    fn neutral_rows_follow_transitions() {
        let p = HmmParams::<f64>::default();
        let t = TransitionMatrix::build(2, &p).unwrap();
        let mut s = IntentionState::new(2, &p).unwrap();
        assert_eq!(s.argmax(), StateLabel::Unknown);
        s.step(&t, &[0.25; 4]).unwrap();
        assert_eq!(s.argmax(), StateLabel::Unknown);
        assert!((s.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sustained_evidence_converges() {
        let p = HmmParams::<f64>::default();
        let t = TransitionMatrix::build(3, &p).unwrap();
        let mut s = IntentionState::new(3, &p).unwrap();
        let mut labels = Vec::new();
        for _ in 0..50 {
            s.observe(&[1.0, 0.0, 0.0], &t, &p).unwrap();
            labels.push(s.argmax());
        }
        assert!(labels[5..].iter().all(|&l| l == StateLabel::Goal(0)));
        assert_eq!(s.most_likely_path().last(), Some(&StateLabel::Goal(0)));
    }

    #[test]
    fn add_goal_rule() {
        let p = HmmParams::<f64>::default();
        let mut s = IntentionState::new(2, &p).unwrap();
        s.scores = vec![0.3, 0.2, 0.4, 0.1];
        s.add_goal(&p).unwrap();
        let e = [0.3 / 1.2, 0.2 / 1.2, 0.2 / 1.2, 0.4 / 1.2, 0.1 / 1.2];
        assert!(close(s.probabilities(), &e, 1e-12));
        assert!(close(s.probabilities(), &[0.25, 0.1667, 0.1667, 0.3333, 0.0833], 1e-4));
    }

    #[test]
    fn add_goal_rejected_at_budget() {
        let p = HmmParams::<f64>::default();
        let mut s = IntentionState::new(9, &p).unwrap();
        assert_eq!(
            s.add_goal(&p).unwrap_err(),
            HmmError::TooManyGoals { requested: 10, max: 9 }
        );
    }

    #[test]
    fn remove_goal_rule() {
        let p = HmmParams::<f64>::default();
        let mut s = IntentionState::new(2, &p).unwrap();
        s.scores = vec![0.3, 0.2, 0.4, 0.1];
        s.remove_goal(0).unwrap();
        assert!(close(s.probabilities(), &[0.2, 0.7, 0.1], 1e-12));
        assert_eq!(s.remove_goal(0).unwrap_err(), HmmError::LastGoal);
    }

    #[test]
    fn add_then_remove_moves_new_mass_to_unknown() {
        let p = HmmParams::<f64>::default();
        let mut s = IntentionState::new(2, &p).unwrap();
        s.scores = vec![0.3, 0.2, 0.4, 0.1];
        s.add_goal(&p).unwrap();
        s.remove_goal(2).unwrap();
        // Goal and irrational entries keep their ratios; the added mass sits on G_?.
        let e = [0.3 / 1.2, 0.2 / 1.2, 0.6 / 1.2, 0.1 / 1.2];
        assert!(close(s.probabilities(), &e, 1e-12));
    }

    #[test]
    fn f32_decoding() {
        let p = HmmParams::<f32>::default();
        let t = TransitionMatrix::build(2, &p).unwrap();
        let mut s = IntentionState::new(2, &p).unwrap();
        for _ in 0..20 {
            s.observe(&[0.0, 1.0], &t, &p).unwrap();
        }
        assert_eq!(s.argmax(), StateLabel::Goal(1));
    }
}
