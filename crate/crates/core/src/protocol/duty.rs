use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::SequenceConfig;

/// Stretch of wall time during which both traps hold an atom and tries run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TryInterval {
    pub start: f64,
    pub end: f64,
}

fn exp_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if !mean.is_finite() {
        return f64::INFINITY;
    }
    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

/// Block structure of the experiment: presence check, a block of tries, repeat; a lost atom is
/// reloaded before the next check. Atom losses are exponential and only noticed at a check.
#[derive(Debug, Clone)]
pub struct SequenceClock {
    seq: SequenceConfig,
    now: f64,
    loss_time: [f64; 2],
}

impl SequenceClock {
    pub fn new<R: Rng + ?Sized>(seq: &SequenceConfig, rng: &mut R) -> Self {
        let loss_time = [exp_sample(seq.trap_lifetime, rng), exp_sample(seq.trap_lifetime, rng)];
        Self { seq: *seq, now: 0.0, loss_time }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Advances to the end of the next block with both atoms and returns its useful part.
    pub fn next_interval<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TryInterval {
        loop {
            self.now += self.seq.presence_check_duration;
            let lost: Vec<usize> = (0..2).filter(|&i| self.loss_time[i] <= self.now).collect();
            if lost.is_empty() {
                let start = self.now;
                let block_end = start + self.seq.block_period;
                let end = block_end.min(self.loss_time[0]).min(self.loss_time[1]);
                self.now = block_end;
                return TryInterval { start, end };
            }
            let mut ready = self.now;
            for i in lost {
                let loaded = self.now + exp_sample(self.seq.loading_time, rng);
                self.loss_time[i] = loaded + exp_sample(self.seq.trap_lifetime, rng);
                ready = ready.max(loaded);
            }
            self.now = ready;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DutyCycleReport {
    pub duty_cycle: f64,
    pub simulated_time: f64,
    pub blocks: usize,
}

/// Fraction of wall time spent trying with atoms in both traps.
pub fn simulate_duty_cycle<R: Rng + ?Sized>(seq: &SequenceConfig, duration: f64, rng: &mut R) -> DutyCycleReport {
    let mut clock = SequenceClock::new(seq, rng);
    let mut useful = 0.0;
    let mut blocks = 0;
    while clock.now() < duration {
        let iv = clock.next_interval(rng);
        useful += iv.end - iv.start;
        blocks += 1;
    }
    let t = clock.now().max(f64::MIN_POSITIVE);
    DutyCycleReport { duty_cycle: useful / t, simulated_time: t, blocks }
}

/// Time fraction a single trap holds an atom when every loss triggers an immediate reload.
pub fn simulate_trap_occupancy<R: Rng + ?Sized>(lifetime: f64, loading_time: f64, duration: f64, rng: &mut R) -> f64 {
    let (mut t, mut present) = (0.0, 0.0);
    while t < duration {
        let life = exp_sample(lifetime, rng).min(duration - t);
        present += life;
        t += life + exp_sample(loading_time, rng);
    }
    present / t.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn default_sequence() -> SequenceConfig {
        SequenceConfig {
            tries_per_cooling_block: 40,
            cooling_duration: 350e-6,
            block_period: 0.2,
            presence_check_duration: 0.04,
            trap_lifetime: 5.0,
            loading_time: 0.8,
            try_overhead: 19.8e-6,
            duty_cycle: None,
        }
    }

    #[test]
    fn lossless_limit() {
        let mut seq = default_sequence();
        seq.trap_lifetime = f64::INFINITY;
        seq.presence_check_duration = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = simulate_duty_cycle(&seq, 100.0, &mut rng);
        assert!((r.duty_cycle - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = simulate_duty_cycle(&default_sequence(), 20_000.0, &mut rng);
        assert!((r.duty_cycle - 0.5).abs() < 0.15, "{}", r.duty_cycle);
    }

    #[test]
    fn occupancy_renewal_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let occ = simulate_trap_occupancy(5.0, 0.8, 200_000.0, &mut rng);
        assert!((occ - 5.0 / 5.8).abs() < 0.01, "{occ}");
        assert!(occ > 5.0 / 6.0);
    }

    #[test]
    fn intervals_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut clock = SequenceClock::new(&default_sequence(), &mut rng);
        let mut last = 0.0;
        for _ in 0..1000 {
            let iv = clock.next_interval(&mut rng);
            assert!(iv.start >= last && iv.end > iv.start && iv.end <= clock.now());
            last = clock.now();
        }
    }
}
