//! Per-patch occlusion detection.
//!
//! Each patch carries a two-state Markov chain over `occluded` /
//! `not occluded`. The transition probabilities `mu` (leave occlusion) and
//! `eta` (enter occlusion) are MAP-estimated online from counted transitions
//! under beta priors, giving closed forms
//!
//! ```text
//! mu_hat  = (a - 1 + n_oc) / (a - 1 + n_oc + b - 1 + n_oo)
//! eta_hat = (c - 1 + n_co) / (c - 1 + n_co + d - 1 + n_cc)
//! ```
//!
//! where `n_xy` counts transitions from state `x` to state `y` (`o` =
//! occluded, `c` = clear). The chain supplies the occlusion prior; the
//! evidence compares how well a patch is reconstructed by its own patch
//! template versus by the rest of the dictionary.

use serde::{Deserialize, Serialize};

use nalgebra::DVector;

use crate::appearance::AppearanceDictionary;
use crate::error::{Error, Result};

/// Beta hyperparameters for the transition probabilities:
/// `mu ~ Beta(a, b)`, `eta ~ Beta(c, d)`. All must exceed 1 so the MAP
/// denominators stay positive at zero counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPriors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl BetaPriors {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !v.is_finite() || v <= 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "beta hyperparameter {name} must be > 1, got {v}"
                )));
            }
        }
        Ok(BetaPriors { a, b, c, d })
    }
}

impl Default for BetaPriors {
    /// `a = d = 4`, `b = c = 8`: zero-count MAP estimates `mu = 0.3`,
    /// `eta = 0.7`.
    fn default() -> Self {
        BetaPriors {
            a: 4.0,
            b: 8.0,
            c: 8.0,
            d: 4.0,
        }
    }
}

/// Per-patch occlusion chain: transition counters, beta priors, the last
/// state, and the full state history.
///
/// The initial state is `not occluded` (the first-frame target is given
/// clean); the first observed state counts as a transition from it.
#[derive(Clone, Debug)]
pub struct OcclusionChain {
    n_occ_occ: u64,
    n_occ_clear: u64,
    n_clear_occ: u64,
    n_clear_clear: u64,
    priors: BetaPriors,
    last_state: bool,
    history: Vec<bool>,
}

impl OcclusionChain {
    pub fn new(priors: BetaPriors) -> Self {
        OcclusionChain {
            n_occ_occ: 0,
            n_occ_clear: 0,
            n_clear_occ: 0,
            n_clear_clear: 0,
            priors,
            last_state: false,
            history: Vec::new(),
        }
    }

    /// MAP estimates `(mu, eta)` of the transition probabilities given the
    /// current counters and the beta priors.
    pub fn map_transitions(&self) -> (f64, f64) {
        let BetaPriors { a, b, c, d } = self.priors;
        let mu = (a - 1.0 + self.n_occ_clear as f64)
            / (a - 1.0 + self.n_occ_clear as f64 + b - 1.0 + self.n_occ_occ as f64);
        let eta = (c - 1.0 + self.n_clear_occ as f64)
            / (c - 1.0 + self.n_clear_occ as f64 + d - 1.0 + self.n_clear_clear as f64);
        (mu, eta)
    }

    /// Prior pair `(p(clear), p(occluded))` for the next state, from the
    /// chain's last state and current MAP transitions.
    pub fn prior(&self) -> (f64, f64) {
        let (mu, eta) = self.map_transitions();
        occlusion_prior(self.last_state, mu, eta)
    }

    /// Records a new state: increments the matching transition counter,
    /// appends to the history, and advances the last state.
    pub fn update(&mut self, occluded: bool) {
        match (self.last_state, occluded) {
            (true, true) => self.n_occ_occ += 1,
            (true, false) => self.n_occ_clear += 1,
            (false, true) => self.n_clear_occ += 1,
            (false, false) => self.n_clear_clear += 1,
        }
        self.history.push(occluded);
        self.last_state = occluded;
    }

    pub fn last_state(&self) -> bool {
        self.last_state
    }

    pub fn history(&self) -> &[bool] {
        &self.history
    }

    /// Counters in the order `(n_oo, n_oc, n_co, n_cc)` with `o` = occluded
    /// and `c` = clear.
    pub fn counters(&self) -> (u64, u64, u64, u64) {
        (
            self.n_occ_occ,
            self.n_occ_clear,
            self.n_clear_occ,
            self.n_clear_clear,
        )
    }

    pub fn priors(&self) -> BetaPriors {
        self.priors
    }
}

/// First-order Markov prior over the next occlusion state: returns
/// `(p(clear), p(occluded))`, which always sums to 1.
pub fn occlusion_prior(last_occluded: bool, mu: f64, eta: f64) -> (f64, f64) {
    if last_occluded {
        (mu, 1.0 - mu)
    } else {
        (1.0 - eta, eta)
    }
}

/// Evidence pair `(L_clear, L_occluded)` for a patch given its sparse code
/// over the full dictionary:
///
/// ```text
/// L_clear    = exp(-||y - D_{Lambda_i}   c_{Lambda_i}  ||^2)
/// L_occluded = exp(-||y - D_{Lambda_i^c} c_{Lambda_i^c}||^2)
/// ```
///
/// A clear patch is reconstructed well by its own patch template; an
/// occluded one leans on the rest of the dictionary.
pub fn occlusion_likelihoods(
    dict: &AppearanceDictionary,
    patch: &DVector<f64>,
    code: &DVector<f64>,
    patch_index: usize,
) -> (f64, f64) {
    let own = dict.reconstruct_in_block(patch_index, code);
    let other = dict.reconstruct_outside_block(patch_index, code);
    let clear = (-(patch - own).norm_squared()).exp();
    let occluded = (-(patch - other).norm_squared()).exp();
    (clear, occluded)
}

/// Posterior probability of occlusion, normalizing the evidence-prior
/// products over the two states.
pub fn occlusion_posterior(likelihoods: (f64, f64), prior: (f64, f64)) -> Result<f64> {
    let (l_clear, l_occ) = likelihoods;
    let (p_clear, p_occ) = prior;
    let numerator = l_occ * p_occ;
    let denominator = numerator + l_clear * p_clear;
    if denominator <= 0.0 {
        return Err(Error::Degenerate(
            "both occlusion likelihoods are zero".into(),
        ));
    }
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::AppearanceDictionary;
    use crate::motion::Template;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn map_transitions_paper_priors_at_zero_counts() {
        let chain = OcclusionChain::new(BetaPriors::default());
        let (mu, eta) = chain.map_transitions();
        assert!((mu - 0.3).abs() < 1e-15);
        assert!((eta - 0.7).abs() < 1e-15);
    }

    #[test]
    fn map_transitions_symmetric_prior_is_half() {
        let chain = OcclusionChain::new(BetaPriors::new(2.0, 2.0, 2.0, 2.0).unwrap());
        let (mu, eta) = chain.map_transitions();
        assert_eq!(mu, 0.5);
        assert_eq!(eta, 0.5);
    }

    #[test]
    fn map_transitions_counts_shift_estimate() {
        let mut chain = OcclusionChain::new(BetaPriors::new(2.0, 2.0, 2.0, 2.0).unwrap());
        // Five clear->occluded and five clear->clear transitions.
        for _ in 0..5 {
            chain.update(true);
            chain.last_state = false;
        }
        for _ in 0..5 {
            chain.update(false);
            chain.last_state = false;
        }
        let (_, eta) = chain.map_transitions();
        assert!((eta - 0.5).abs() < 1e-15); // (1 + 5) / (1 + 5 + 1 + 5)
    }

    #[test]
    fn prior_pairs_follow_last_state() {
        let (p0, p1) = occlusion_prior(true, 0.3, 0.9);
        assert_eq!(p0, 0.3);
        assert!((p1 - 0.7).abs() < 1e-15);
        assert_eq!(occlusion_prior(false, 0.3, 0.0), (1.0, 0.0));
        assert_eq!(occlusion_prior(true, 0.5, 0.5), (0.5, 0.5));
        assert_eq!(occlusion_prior(false, 0.5, 0.5), (0.5, 0.5));
    }

    #[test]
    fn prior_sums_to_one() {
        for &last in &[false, true] {
            for i in 0..=10 {
                let mu = i as f64 / 10.0;
                let (p0, p1) = occlusion_prior(last, mu, 1.0 - mu);
                assert!((p0 + p1 - 1.0).abs() < 1e-15);
            }
        }
    }

    fn small_dict() -> AppearanceDictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let extract = |dx: f64, dy: f64| {
            let pixels = (0..256)
                .map(|i| {
                    let x = (i % 16) as f64 + dx;
                    let y = (i / 16) as f64 + dy;
                    0.5 + 0.4 * ((0.41 * x + 0.13 * y).sin())
                })
                .collect();
            Template::new(16, pixels)
        };
        AppearanceDictionary::init(extract, 3, 2, 8, &mut rng).unwrap()
    }

    #[test]
    fn likelihoods_perfect_in_template_reconstruction() {
        let dict = small_dict();
        let mut code = DVector::zeros(dict.solver_dict().n_atoms());
        let range = dict.block_range(1);
        code[range.start] = 0.7;
        code[range.start + 2] = -0.2;
        let patch = dict.reconstruct_in_block(1, &code);
        let (clear, occ) = occlusion_likelihoods(&dict, &patch, &code, 1);
        assert!((clear - 1.0).abs() < 1e-12);
        assert!((occ - (-patch.norm_squared()).exp()).abs() < 1e-12);
    }

    #[test]
    fn likelihoods_zero_code_collapse_to_signal_norm() {
        let dict = small_dict();
        let code = DVector::zeros(dict.solver_dict().n_atoms());
        let patch = DVector::from_fn(64, |i, _| 0.1 + 0.01 * i as f64);
        let (clear, occ) = occlusion_likelihoods(&dict, &patch, &code, 0);
        let expected = (-patch.norm_squared()).exp();
        assert!((clear - expected).abs() < 1e-12);
        assert!((occ - expected).abs() < 1e-12);
    }

    #[test]
    fn likelihoods_match_independent_reevaluation() {
        // Dual implementation: rebuild D_{Lambda_i} c and D_{Lambda_i^c} c
        // column by column straight from the definition.
        let dict = small_dict();
        let n = dict.solver_dict().n_atoms();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let code = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let patch = DVector::from_fn(64, |_, _| rng.random::<f64>());

        let range = dict.block_range(2);
        let atoms = dict.solver_dict().atoms();
        let mut own = DVector::zeros(64);
        let mut other = DVector::zeros(64);
        for col in 0..n {
            let contribution = atoms.column(col) * code[col];
            if range.contains(&col) {
                own += &contribution;
            } else {
                other += &contribution;
            }
        }
        let expected_clear = (-(&patch - own).norm_squared()).exp();
        let expected_occ = (-(&patch - other).norm_squared()).exp();

        let (clear, occ) = occlusion_likelihoods(&dict, &patch, &code, 2);
        assert!((clear - expected_clear).abs() < 1e-9);
        assert!((occ - expected_occ).abs() < 1e-9);
    }

    #[test]
    fn posterior_hand_arithmetic() {
        assert_eq!(occlusion_posterior((0.5, 0.5), (0.5, 0.5)).unwrap(), 0.5);
        assert_eq!(occlusion_posterior((0.4, 0.0), (0.5, 0.5)).unwrap(), 0.0);
        let p = occlusion_posterior((0.2, 0.6), (0.3, 0.7)).unwrap();
        assert!((p - 0.875).abs() < 1e-12); // 0.42 / (0.06 + 0.42)
    }

    #[test]
    fn posterior_degenerate_evidence_errors() {
        assert!(matches!(
            occlusion_posterior((0.0, 0.0), (0.5, 0.5)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn posterior_is_monotone_in_evidence_and_prior() {
        let base = occlusion_posterior((0.4, 0.3), (0.6, 0.4)).unwrap();
        let more_occ = occlusion_posterior((0.4, 0.5), (0.6, 0.4)).unwrap();
        let more_prior = occlusion_posterior((0.4, 0.3), (0.4, 0.6)).unwrap();
        assert!(more_occ > base);
        assert!(more_prior > base);
    }

    #[test]
    fn update_tallies_transitions() {
        let mut chain = OcclusionChain::new(BetaPriors::default());
        chain.update(false);
        assert_eq!(chain.counters(), (0, 0, 0, 1));
        let mut chain = OcclusionChain::new(BetaPriors::default());
        chain.update(true);
        assert_eq!(chain.counters(), (0, 0, 1, 0));

        // Sequence 0, 1, 1, 0 from the initial clear state.
        let mut chain = OcclusionChain::new(BetaPriors::default());
        for &s in &[false, true, true, false] {
            chain.update(s);
        }
        let (n_oo, n_oc, n_co, n_cc) = chain.counters();
        assert_eq!((n_co, n_oo, n_oc), (1, 1, 1));
        assert_eq!(n_cc, 1);
        assert_eq!(chain.history(), &[false, true, true, false]);
        assert_eq!((n_oo + n_oc + n_co + n_cc) as usize, chain.history().len());
        assert!(!chain.last_state());
    }

    /// Grid-search check of the closed-form MAP against the log posterior
    /// `log B(mu|a,b) + log B(eta|c,d) + sum log p(o_i | o_{i-1})`.
    #[test]
    fn map_transitions_match_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let priors = BetaPriors::new(
                1.5 + rng.random::<f64>() * 5.0,
                1.5 + rng.random::<f64>() * 5.0,
                1.5 + rng.random::<f64>() * 5.0,
                1.5 + rng.random::<f64>() * 5.0,
            )
            .unwrap();
            let mut chain = OcclusionChain::new(priors);
            for _ in 0..30 {
                chain.update(rng.random::<f64>() < 0.4);
            }
            let (mu, eta) = chain.map_transitions();
            let (n_oo, n_oc, n_co, n_cc) = chain.counters();

            let steps = 400;
            let log_post = |m: f64, e: f64| {
                (priors.a - 1.0 + n_oc as f64) * m.ln()
                    + (priors.b - 1.0 + n_oo as f64) * (1.0 - m).ln()
                    + (priors.c - 1.0 + n_co as f64) * e.ln()
                    + (priors.d - 1.0 + n_cc as f64) * (1.0 - e).ln()
            };
            let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
            for i in 0..steps {
                let m = (i as f64 + 0.5) / steps as f64;
                for j in 0..steps {
                    let e = (j as f64 + 0.5) / steps as f64;
                    let value = log_post(m, e);
                    if value > best.0 {
                        best = (value, m, e);
                    }
                }
            }
            assert!((best.1 - mu).abs() < 5e-3, "mu {mu} vs grid {}", best.1);
            assert!((best.2 - eta).abs() < 5e-3, "eta {eta} vs grid {}", best.2);
        }
    }
}
