//! Weighted sampling without replacement for oracle-node selection.
//!
//! Both samplers implement the key-based scheme of Efraimidis & Spirakis:
//! each item receives the key `u^(1/w)` for an independent uniform
//! `u` in (0, 1), and the `m` largest keys win. [`a_res_sample`] draws one
//! key per item (the naive variant, kept as a distributional reference);
//! [`a_expj_sample`] jumps over stream items with an exponentially
//! distributed weight budget, consuming one logarithm draw per *skip* rather
//! than one draw per item, which is what a registry-scale selector wants.
//!
//! Keys are held in log space (`ln(u)/w`) so extreme weights can neither
//! underflow a key to zero nor collapse ties; the two representations order
//! identically. Key ties are broken in favor of the item already in the
//! reservoir (replacement requires a strictly larger key), so a run is fully
//! determined by `(stream order, m, rng)`.

use rand::distributions::Open01;
use rand::Rng;

/// One stream element: an identifier plus its selection weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedItem<T> {
    pub id: T,
    pub weight: f64,
}

impl<T> WeightedItem<T> {
    pub fn new(id: T, weight: f64) -> Self {
        Self { id, weight }
    }
}

/// Rejected stream input: the offending item is identified by its 0-based
/// position in the stream.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SampleError {
    #[error("item {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("item {index} has non-finite weight {weight}")]
    NonFiniteWeight { index: usize, weight: f64 },
}

fn validate(index: usize, weight: f64) -> Result<(), SampleError> {
    if !weight.is_finite() {
        return Err(SampleError::NonFiniteWeight { index, weight });
    }
    if weight <= 0.0 {
        return Err(SampleError::NonPositiveWeight { index, weight });
    }
    Ok(())
}

/// Uniform draw from the open interval (0, 1), safe to feed into `ln`.
fn open01(rng: &mut (impl Rng + ?Sized)) -> f64 {
    rng.sample(Open01)
}

#[derive(Debug, Clone)]
struct Slot<T> {
    id: T,
    log_key: f64,
}

/// Streaming exponential-jump reservoir. `offer` consumes the stream one
/// item at a time; the reservoir keeps the `m` items with the largest keys
/// seen so far.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    slots: Vec<Slot<T>>,
    /// Log of the smallest reservoir key (the replacement threshold `T_w`).
    log_threshold: f64,
    /// Remaining stream weight to skip before the next replacement (`X_w`).
    skip_budget: f64,
    offered: usize,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            slots: Vec::with_capacity(capacity),
            log_threshold: f64::NEG_INFINITY,
            skip_budget: 0.0,
            offered: 0,
        }
    }

    /// Current replacement threshold `ln(T_w)`; meaningful once full.
    pub fn log_threshold(&self) -> f64 {
        self.log_threshold
    }

    /// Remaining skip budget `X_w` in stream-weight units.
    pub fn skip_budget(&self) -> f64 {
        self.skip_budget
    }

    /// Number of items offered so far.
    pub fn offered(&self) -> usize {
        self.offered
    }

    fn refresh_threshold(&mut self) {
        self.log_threshold = self
            .slots
            .iter()
            .map(|s| s.log_key)
            .fold(f64::INFINITY, f64::min);
    }

    fn draw_skip_budget(&mut self, rng: &mut (impl Rng + ?Sized)) {
        // X_w = ln(r) / ln(T_w): the total stream weight that passes before
        // some future key exceeds the current threshold.
        self.skip_budget = open01(rng).ln() / self.log_threshold;
    }

    /// Feeds the next stream item through the sampler.
    pub fn offer(
        &mut self,
        item: WeightedItem<T>,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<(), SampleError> {
        validate(self.offered, item.weight)?;
        self.offered += 1;
        if self.capacity == 0 {
            return Ok(());
        }
        if self.slots.len() < self.capacity {
            let log_key = open01(rng).ln() / item.weight;
            self.slots.push(Slot { id: item.id, log_key });
            if self.slots.len() == self.capacity {
                self.refresh_threshold();
                self.draw_skip_budget(rng);
            }
            return Ok(());
        }

        self.skip_budget -= item.weight;
        if self.skip_budget > 0.0 {
            return Ok(());
        }

        // This item crosses the jump boundary: it replaces the minimum with a
        // key drawn conditioned on exceeding the threshold, r2 in (T_w^w, 1).
        let lower = (item.weight * self.log_threshold).exp();
        // Guard the open upper bound: `lower` can round to 1.0 when the
        // threshold is within one ulp of a full reservoir of near-1 keys.
        let lower = lower.min(1.0 - f64::EPSILON);
        let r2 = rng.gen_range(lower..1.0);
        let log_key = r2.ln() / item.weight;

        let (min_idx, _) = self
            .slots
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.log_key.total_cmp(&b.1.log_key))
            .expect("reservoir is full");
        self.slots[min_idx] = Slot { id: item.id, log_key };
        self.refresh_threshold();
        self.draw_skip_budget(rng);
        Ok(())
    }

    /// Extracts the selected identifiers (deterministic slot order).
    pub fn into_selected(self) -> Vec<T> {
        self.slots.into_iter().map(|s| s.id).collect()
    }
}

/// Weighted sample of `m` distinct items via exponential jumps (A-ExpJ).
///
/// Returns fewer than `m` items only when the stream itself is shorter than
/// `m`. Every stream item is weight-validated even when it cannot be
/// selected.
pub fn a_expj_sample<T>(
    stream: impl IntoIterator<Item = WeightedItem<T>>,
    m: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Vec<T>, SampleError> {
    let mut reservoir = Reservoir::new(m);
    for item in stream {
        reservoir.offer(item, rng)?;
    }
    Ok(reservoir.into_selected())
}

/// Weighted sample of `m` distinct items drawing one key per item (A-Res).
///
/// Distributionally identical to [`a_expj_sample`]; kept as the reference
/// implementation the jump variant is validated against.
pub fn a_res_sample<T>(
    stream: impl IntoIterator<Item = WeightedItem<T>>,
    m: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Vec<T>, SampleError> {
    let mut slots: Vec<Slot<T>> = Vec::with_capacity(m);
    for (index, item) in stream.into_iter().enumerate() {
        validate(index, item.weight)?;
        if m == 0 {
            continue;
        }
        let log_key = open01(rng).ln() / item.weight;
        if slots.len() < m {
            slots.push(Slot { id: item.id, log_key });
            continue;
        }
        let (min_idx, min_key) = slots
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.log_key))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("reservoir is full");
        if log_key > min_key {
            slots[min_idx] = Slot { id: item.id, log_key };
        }
    }
    Ok(slots.into_iter().map(|s| s.id).collect())
}
