//! Walk paths, the carried sign process, and the crossing-time
//! decomposition into half-excursions.
//!
//! Sign convention: `sgn(S_0) = +1`, and a visit to zero keeps the previous
//! sign. A crossing time is an `s` with `sgn(S_s)·sgn(S_{s+1}) = −1`. Odd
//! half-excursions are positive. When the very first step is negative the
//! flip happens between times 0 and 1, so `t_1 = 0` and the first positive
//! half-excursion is empty (`τ_1 = 0`); every later `τ_i` is at least 1.

use std::io::{self, Write};

use num_rational::Ratio;

use crate::barrier::{Barrier, Mode};
use crate::increments::IncrementSampler;
use crate::rng::RandomStream;

/// Below this many safe steps a jump is not worth a binomial draw.
const JUMP_MIN: u64 = 16;

#[inline]
pub(crate) fn carried_sign(position: i64, previous: i8) -> i8 {
    match position.signum() {
        1 => 1,
        -1 => -1,
        _ => previous,
    }
}

/// A realized path `S_0 = 0, S_1, ..., S_horizon`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path(pub Vec<i64>);

impl Path {
    pub fn from_steps(steps: &[i64]) -> Self {
        let mut v = Vec::with_capacity(steps.len() + 1);
        let mut s = 0i64;
        v.push(0);
        for st in steps {
            s += st;
            v.push(s);
        }
        Path(v)
    }

    pub fn horizon(&self) -> u64 {
        self.0.len() as u64 - 1
    }

    pub fn steps(&self) -> Vec<i64> {
        self.0.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// CSV dump with columns `step,position,sign,cumulative_sign_sum`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,position,sign,cumulative_sign_sum")?;
        let signs = sign_process(self);
        let mut sum = 0i64;
        for (n, (&pos, &sg)) in self.0.iter().zip(&signs).enumerate() {
            if n > 0 {
                sum += sg as i64;
            }
            writeln!(out, "{n},{pos},{sg},{sum}")?;
        }
        Ok(())
    }
}

pub fn simulate_path(sampler: &IncrementSampler, horizon: u64, stream: &mut RandomStream) -> Path {
    let mut src = SampledSteps::new(sampler, stream.clone());
    let mut v = Vec::with_capacity(horizon as usize + 1);
    let mut s = 0i64;
    v.push(0);
    for _ in 0..horizon {
        s += src.step();
        v.push(s);
    }
    *stream = src.into_stream();
    Path(v)
}

/// `sgn(S_n)` for every `n`, with the zero-carry rule.
pub fn sign_process(path: &Path) -> Vec<i8> {
    let mut out = Vec::with_capacity(path.0.len());
    let mut prev = 1i8;
    for (n, &p) in path.0.iter().enumerate() {
        let s = if n == 0 { 1 } else { carried_sign(p, prev) };
        out.push(s);
        prev = s;
    }
    out
}

/// Crossing times, half-excursion durations and endpoint values of a path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcursionDecomposition {
    /// `t_1, t_2, ...` (`t_0 = 0` is implicit).
    pub crossing_times: Vec<u64>,
    /// `τ_i = t_i − t_{i−1}`.
    pub durations: Vec<u64>,
    /// `N_t`: completed (positive, negative) pairs.
    pub complete_excursions: usize,
    /// Steps after `t_{2N_t}`.
    pub residual: u64,
    pub horizon: u64,
    /// `(S_{t_i}, S_{t_i+1})` for every crossing.
    pub endpoint_values: Vec<(i64, i64)>,
}

impl ExcursionDecomposition {
    /// Odd (1-based) half-excursions carry sign +1.
    pub fn is_positive(i: usize) -> bool {
        i % 2 == 1
    }
}

pub fn decompose(path: &Path) -> ExcursionDecomposition {
    let signs = sign_process(path);
    let mut crossing_times = Vec::new();
    let mut durations = Vec::new();
    let mut endpoint_values = Vec::new();
    let mut last = 0u64;
    for s in 0..signs.len().saturating_sub(1) {
        if signs[s] != signs[s + 1] {
            let t = s as u64;
            crossing_times.push(t);
            durations.push(t - last);
            endpoint_values.push((path.0[s], path.0[s + 1]));
            last = t;
        }
    }
    let complete = durations.len() / 2;
    let used: u64 = durations[..2 * complete].iter().sum();
    ExcursionDecomposition {
        crossing_times,
        durations,
        complete_excursions: complete,
        residual: path.horizon() - used,
        horizon: path.horizon(),
        endpoint_values,
    }
}

/// Smallest `s >= 1` at which the sign-sum condition fails, or `None` if it
/// holds along the whole path.
pub fn first_violation_time(path: &Path, x: Barrier, mode: Mode) -> Option<u64> {
    let signs = sign_process(path);
    let mut sum = 0i64;
    for (s, &sg) in signs.iter().enumerate().skip(1) {
        sum += sg as i64;
        if !mode.holds(x.gap(sum, s as u64)) {
            return Some(s as u64);
        }
    }
    None
}

/// `ξ_i = (1−x)·τ_{2i−1} − (1+x)·τ_{2i}` and partial sums `W_m`, stored
/// exactly as integers scaled by the barrier denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XiSequence {
    pub x: Barrier,
    scaled: Vec<i128>,
    partial: Vec<i128>,
}

impl XiSequence {
    pub fn from_durations(durations: &[u64], x: Barrier) -> Self {
        let mut scaled = Vec::with_capacity(durations.len() / 2);
        let mut partial = Vec::with_capacity(durations.len() / 2);
        let mut w = 0i128;
        for pair in durations.chunks_exact(2) {
            let xi = scaled_xi(x, pair[0], pair[1]);
            w += xi;
            scaled.push(xi);
            partial.push(w);
        }
        Self { x, scaled, partial }
    }

    pub fn len(&self) -> usize {
        self.scaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaled.is_empty()
    }

    /// `ξ_i` for 1-based `i`.
    pub fn value(&self, i: usize) -> Ratio<i128> {
        Ratio::new(self.scaled[i - 1], self.x.den() as i128)
    }

    /// `W_m` for 1-based `m`.
    pub fn partial_sum(&self, m: usize) -> Ratio<i128> {
        Ratio::new(self.partial[m - 1], self.x.den() as i128)
    }

    /// Whether `W_1, ..., W_k` all satisfy the mode's inequality against 0.
    pub fn survives(&self, k: usize, mode: Mode) -> bool {
        self.partial[..k].iter().all(|&w| mode.holds(w))
    }
}

/// `den·ξ` for one (positive, negative) pair.
#[inline]
pub fn scaled_xi(x: Barrier, tau_pos: u64, tau_neg: u64) -> i128 {
    let (p, q) = (x.num() as i128, x.den() as i128);
    (q - p) * tau_pos as i128 - (q + p) * tau_neg as i128
}

pub fn xi_sequence(dec: &ExcursionDecomposition, x: Barrier) -> XiSequence {
    XiSequence::from_durations(&dec.durations[..2 * dec.complete_excursions], x)
}

/// A supply of increments, one at a time or summed over a block.
pub trait StepSource {
    fn step(&mut self) -> i64;
    /// Sum of the next `m` increments.
    fn jump(&mut self, m: u64) -> i64;
    /// Largest possible upward step.
    fn max_up(&self) -> i64;
    /// Largest possible downward step magnitude.
    fn max_down(&self) -> i64;
}

/// Increments drawn from a sampler and one random stream.
pub struct SampledSteps<'a> {
    sampler: &'a IncrementSampler,
    rng: RandomStream,
    bits: u32,
    buf: u64,
    left: u32,
}

impl<'a> SampledSteps<'a> {
    pub fn new(sampler: &'a IncrementSampler, rng: RandomStream) -> Self {
        Self {
            sampler,
            rng,
            bits: sampler.dyadic_bits().unwrap_or(0),
            buf: 0,
            left: 0,
        }
    }

    pub fn into_stream(self) -> RandomStream {
        self.rng
    }
}

impl StepSource for SampledSteps<'_> {
    #[inline]
    fn step(&mut self) -> i64 {
        use rand::RngCore;
        if self.bits == 0 {
            return self.sampler.sample(&mut self.rng);
        }
        if self.left < self.bits {
            self.buf = self.rng.next_u64();
            self.left = 64;
        }
        let v = self.sampler.from_bits(self.buf);
        self.buf >>= self.bits;
        self.left -= self.bits;
        v
    }

    fn jump(&mut self, m: u64) -> i64 {
        self.sampler.sample_sum(m, &mut self.rng)
    }

    fn max_up(&self) -> i64 {
        self.sampler.max_up()
    }

    fn max_down(&self) -> i64 {
        self.sampler.max_down()
    }
}

/// Replays a fixed list of increments; used to drive the streaming engines
/// along enumerated paths.
pub struct ReplaySteps<'a> {
    steps: &'a [i64],
    at: usize,
    max_up: i64,
    max_down: i64,
}

impl<'a> ReplaySteps<'a> {
    pub fn new(steps: &'a [i64]) -> Self {
        let max_up = steps.iter().copied().max().unwrap_or(1).max(1);
        let max_down = steps.iter().map(|s| -s).max().unwrap_or(1).max(1);
        Self { steps, at: 0, max_up, max_down }
    }

    pub fn remaining(&self) -> usize {
        self.steps.len() - self.at
    }
}

impl StepSource for ReplaySteps<'_> {
    fn step(&mut self) -> i64 {
        let v = self.steps[self.at];
        self.at += 1;
        v
    }

    fn jump(&mut self, m: u64) -> i64 {
        let end = self.at + m as usize;
        let s = self.steps[self.at..end].iter().sum();
        self.at = end;
        s
    }

    fn max_up(&self) -> i64 {
        self.max_up
    }

    fn max_down(&self) -> i64 {
        self.max_down
    }
}

/// Number of steps that certainly keep the walk strictly on its current side.
#[inline]
fn safe_steps<S: StepSource>(src: &S, position: i64) -> u64 {
    let toward = if position > 0 { src.max_down() } else { src.max_up() };
    ((position.abs() - 1) / toward).max(0) as u64
}

/// Runs the walk online until the sign-sum condition first fails or `t_max`
/// steps have elapsed. Returns the violation time, or `None` on survival.
///
/// Far from zero the walk advances in exact multinomial blocks that cannot
/// change sign; inside a negative block the violation time is solved for in
/// closed form since the sign-sum drops by one per step.
pub fn first_violation_streaming<S: StepSource>(
    src: &mut S,
    x: Barrier,
    mode: Mode,
    t_max: u64,
) -> Option<u64> {
    let (p, q) = (x.num() as i128, x.den() as i128);
    let mut s = 0u64;
    let mut pos = 0i64;
    let mut sign = 1i8;
    let mut sum = 0i64;
    while s < t_max {
        if pos != 0 {
            let m = safe_steps(src, pos);
            if m >= JUMP_MIN {
                let m = m.min(t_max - s);
                if pos < 0 {
                    // gap(s + j) = gap(s) − j·(p + q)
                    let gap = x.gap(sum, s);
                    let first_bad = match mode {
                        Mode::Strict => (gap + p + q - 1) / (p + q),
                        Mode::Weak => gap / (p + q) + 1,
                    } as u64;
                    if first_bad <= m {
                        return Some(s + first_bad);
                    }
                    sum -= m as i64;
                } else {
                    sum += m as i64;
                }
                pos += src.jump(m);
                s += m;
                continue;
            }
        }
        pos += src.step();
        sign = carried_sign(pos, sign);
        s += 1;
        sum += sign as i64;
        if !mode.holds(q * sum as i128 - p * s as i128) {
            return Some(s);
        }
    }
    None
}

/// One half-excursion as produced by [`ExcursionWalker`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HalfExcursion {
    /// 1-based index `i`.
    pub index: usize,
    pub duration: u64,
    pub positive: bool,
    /// `S_{t_{i−1}+1}`: first position of the stretch (for `i = 1` with an
    /// empty stretch this is the first, negative, position).
    pub entry: i64,
    /// `S_{t_i}`.
    pub exit: i64,
    /// The stretch reached the step cap before ending; `duration` is the cap.
    pub capped: bool,
}

/// Generates the half-excursions of a walk one after another, from the
/// origin, without storing the path.
pub struct ExcursionWalker<S> {
    src: S,
    time: u64,
    pos: i64,
    sign: i8,
    last_crossing: u64,
    index: usize,
    entry: Option<i64>,
}

impl<S: StepSource> ExcursionWalker<S> {
    pub fn new(src: S) -> Self {
        Self {
            src,
            time: 0,
            pos: 0,
            sign: 1,
            last_crossing: 0,
            index: 0,
            entry: None,
        }
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn into_source(self) -> S {
        self.src
    }

    /// Next half-excursion; stops early (with `capped = true`) once its
    /// duration reaches `cap`. The walker must not be used after a capped
    /// half-excursion.
    pub fn next_half(&mut self, cap: u64) -> HalfExcursion {
        self.index += 1;
        let start = self.last_crossing;
        let positive = self.index % 2 == 1;
        loop {
            let elapsed = self.time - start;
            if elapsed >= cap {
                return HalfExcursion {
                    index: self.index,
                    duration: cap,
                    positive,
                    entry: self.entry.unwrap_or(self.pos),
                    exit: self.pos,
                    capped: true,
                };
            }
            if self.pos != 0 {
                let m = safe_steps(&self.src, self.pos);
                if m >= JUMP_MIN {
                    let m = m.min(cap - elapsed);
                    self.pos += self.src.jump(m);
                    self.time += m;
                    continue;
                }
            }
            let next = self.pos + self.src.step();
            let next_sign = carried_sign(next, self.sign);
            if next_sign != self.sign {
                let out = HalfExcursion {
                    index: self.index,
                    duration: self.time - start,
                    positive,
                    entry: self.entry.unwrap_or(next),
                    exit: self.pos,
                    capped: false,
                };
                self.last_crossing = self.time;
                self.entry = Some(next);
                self.time += 1;
                self.pos = next;
                self.sign = next_sign;
                return out;
            }
            if self.entry.is_none() {
                self.entry = Some(next);
            }
            self.time += 1;
            self.pos = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::increments::IncrementDistribution;
    use proptest::prelude::*;

    fn p(v: &[i64]) -> Path {
        Path(v.to_vec())
    }

    #[test]
    fn sign_process_examples() {
        assert_eq!(sign_process(&p(&[0, 1, 0, -1])), vec![1, 1, 1, -1]);
        assert_eq!(sign_process(&p(&[0, -1, 0, 1])), vec![1, -1, -1, 1]);
        assert_eq!(sign_process(&p(&[0, 1, 2, 1])), vec![1, 1, 1, 1]);
    }

    #[test]
    fn simulate_path_basics() {
        let s = IncrementSampler::new(&IncrementDistribution::simple());
        let mut r = RandomStream::from_seed(1, 0);
        assert_eq!(simulate_path(&s, 0, &mut r), p(&[0]));
        let a = simulate_path(&s, 50, &mut RandomStream::from_seed(3, 4));
        let b = simulate_path(&s, 50, &mut RandomStream::from_seed(3, 4));
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 51);
        assert!(a.steps().iter().all(|s| s.abs() == 1));
    }

    #[test]
    fn long_asymmetric_path_is_diffusive() {
        let d = IncrementDistribution::from_arg("unit-up:-2").unwrap();
        let s = IncrementSampler::new(&d);
        // σ√n = √2·10³ ≈ 1414; the max over a path is a few σ√n.
        for seed in 0..5 {
            let path = simulate_path(&s, 1_000_000, &mut RandomStream::from_seed(seed, 0));
            let max = path.0.iter().map(|v| v.abs()).max().unwrap();
            assert!(max < 20_000, "max |S| = {max}");
        }
    }

    #[test]
    fn decompose_hand_trace() {
        let d = decompose(&p(&[0, 1, 0, -1, 0, 1]));
        assert_eq!(d.crossing_times, vec![2, 4]);
        assert_eq!(d.durations, vec![2, 2]);
        assert_eq!(d.complete_excursions, 1);
        assert_eq!(d.residual, 1);
        assert_eq!(d.endpoint_values, vec![(0, -1), (0, 1)]);
    }

    #[test]
    fn decompose_all_positive() {
        let d = decompose(&p(&[0, 1, 2, 1, 2, 3]));
        assert!(d.crossing_times.is_empty());
        assert_eq!(d.complete_excursions, 0);
        assert_eq!(d.residual, 5);
    }

    #[test]
    fn negative_first_step_gives_empty_first_half() {
        let d = decompose(&p(&[0, -1, 0, 1, 0, -1]));
        assert_eq!(d.crossing_times, vec![0, 2, 4]);
        assert_eq!(d.durations, vec![0, 2, 2]);
        assert_eq!(d.complete_excursions, 1);
        assert_eq!(d.residual, 3);
    }

    #[test]
    fn prefix_through_t2k_has_2k_durations() {
        let path = p(&[0, 1, 0, -1, -2, -1, 0, 1, 2, 1, 0, -1, 0, 1]);
        let full = decompose(&path);
        for k in 1..=full.complete_excursions {
            let t2k = full.crossing_times[2 * k - 1] as usize;
            // The flip at t_{2k} is only visible with S_{t_{2k}+1}.
            let prefix = Path(path.0[..=t2k + 1].to_vec());
            let d = decompose(&prefix);
            assert_eq!(d.durations.len(), 2 * k);
            assert_eq!(d.residual, 1);
        }
    }

    #[test]
    fn first_violation_examples() {
        let x0 = Barrier::ZERO;
        assert_eq!(first_violation_time(&p(&[0, -1, -2]), x0, Mode::Strict), Some(1));
        assert_eq!(first_violation_time(&p(&[0, 1, 0, -1, -2]), x0, Mode::Strict), Some(4));
        assert_eq!(first_violation_time(&p(&[0, 1, 0, -1, -2]), x0, Mode::Weak), None);
        assert_eq!(first_violation_time(&p(&[0, 1, 2, 3, 2, 1]), x0, Mode::Strict), None);
    }

    #[test]
    fn xi_examples() {
        let half = Barrier::new(1, 2).unwrap();
        let s = XiSequence::from_durations(&[2, 2], Barrier::ZERO);
        assert_eq!(s.value(1), Ratio::from_integer(0));
        assert_eq!(s.partial_sum(1), Ratio::from_integer(0));
        let s = XiSequence::from_durations(&[3, 1], half);
        assert_eq!(s.value(1), Ratio::from_integer(0));
        let s = XiSequence::from_durations(&[1, 3], Barrier::ZERO);
        assert_eq!(s.value(1), Ratio::from_integer(-2));
        assert!(!s.survives(1, Mode::Weak));
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        p(&[0, 1, 0, -1]).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,position,sign,cumulative_sign_sum\n0,0,1,0\n1,1,1,1\n2,0,1,2\n3,-1,-1,1\n"
        );
    }

    #[test]
    fn random_paths_partition_and_alternate() {
        let s = IncrementSampler::new(&IncrementDistribution::from_arg("unit-up:-2").unwrap());
        for i in 0..10_000u64 {
            let path = simulate_path(&s, 200, &mut RandomStream::from_seed(11, i));
            let signs = sign_process(&path);
            let d = decompose(&path);
            let used: u64 = d.durations[..2 * d.complete_excursions].iter().sum();
            assert_eq!(used + d.residual, 200);
            let mut last = 0usize;
            for (j, &t) in d.crossing_times.iter().enumerate() {
                let t = t as usize;
                assert_eq!(signs[t] * signs[t + 1], -1);
                let want = if j % 2 == 0 { 1 } else { -1 };
                let from = if j == 0 { 1 } else { last + 1 };
                assert!(signs[from..=t].iter().all(|&sg| sg == want));
                if j > 0 {
                    assert!(d.durations[j] >= 1);
                }
                last = t;
            }
        }
    }

    fn steps_strategy() -> impl Strategy<Value = Vec<i64>> {
        prop::collection::vec(prop::sample::select(vec![-3i64, -1, 1, 2]), 1..400)
    }

    proptest! {
        #[test]
        fn streaming_matches_stored_path(steps in steps_strategy(), num in 0i64..4, weak in any::<bool>()) {
            let x = Barrier::new(num, 4).unwrap();
            let mode = if weak { Mode::Weak } else { Mode::Strict };
            let path = Path::from_steps(&steps);
            let want = first_violation_time(&path, x, mode);
            let mut src = ReplaySteps::new(&steps);
            let got = first_violation_streaming(&mut src, x, mode, steps.len() as u64);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn walker_matches_decomposition(steps in steps_strategy()) {
            let path = Path::from_steps(&steps);
            let dec = decompose(&path);
            let mut w = ExcursionWalker::new(ReplaySteps::new(&steps));
            for (i, &tau) in dec.durations.iter().enumerate() {
                // Enough steps remain to reveal the next crossing.
                let h = w.next_half(u64::MAX);
                prop_assert_eq!(h.duration, tau);
                prop_assert_eq!(h.positive, i % 2 == 0);
                prop_assert_eq!(h.exit, dec.endpoint_values[i].0);
            }
        }
    }
}
