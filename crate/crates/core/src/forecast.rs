//! Additive forecast evolution.
//!
//! Every (product, due date) pair carries a forecast that starts at the
//! long-term value and receives one additive update per period during the
//! last `horizon` periods before delivery. Updates are drawn from a normal
//! distribution truncated so the forecast can never turn negative; their
//! mean encodes a bias schedule and their standard deviation the level of
//! uncertainty.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{DemandPattern, ItemId};
use crate::{Period, Pieces};

/// Forecast horizon: updates start this many periods before delivery.
pub const FORECAST_HORIZON: u32 = 10;

/// Rejection attempts before giving up and returning the clamped mean.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasSchedule {
    Unbiased,
    TempOver,
    TempUnder,
    PermOver,
    PermUnder,
}

impl BiasSchedule {
    pub const ALL: [BiasSchedule; 5] = [
        Self::Unbiased,
        Self::TempOver,
        Self::TempUnder,
        Self::PermOver,
        Self::PermUnder,
    ];
    pub const BIASED: [BiasSchedule; 4] =
        [Self::TempOver, Self::TempUnder, Self::PermOver, Self::PermUnder];

    /// Bias fractions `b_10, b_9, ..., b_1`.
    pub fn fractions(self) -> [f64; 10] {
        const TEMP_OVER: [f64; 10] = [0.0, 0.0, 0.04, 0.04, 0.08, 0.0, 0.0, -0.08, -0.04, -0.04];
        match self {
            Self::Unbiased => [0.0; 10],
            Self::TempOver => TEMP_OVER,
            Self::TempUnder => TEMP_OVER.map(|b| -b),
            Self::PermOver => [-0.04; 10],
            Self::PermUnder => [0.04; 10],
        }
    }

    /// `b_j` for `1 <= j <= 10`, zero elsewhere.
    pub fn fraction(self, j: u32) -> f64 {
        if (1..=10).contains(&j) {
            self.fractions()[(10 - j) as usize]
        } else {
            0.0
        }
    }

    pub fn is_permanent(self) -> bool {
        matches!(self, Self::PermOver | Self::PermUnder)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Unbiased => "unbiased",
            Self::TempOver => "temp-over",
            Self::TempUnder => "temp-under",
            Self::PermOver => "perm-over",
            Self::PermUnder => "perm-under",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == s)
    }
}

impl fmt::Display for BiasSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Update standard deviation as a fraction of the expected demand.
    pub alpha: f64,
    /// Bias level, 0 or 1.
    pub beta: f64,
    pub bias: BiasSchedule,
    pub horizon: u32,
    pub expected_final_demand: Pieces,
}

impl ScenarioParams {
    pub fn new(alpha: f64, beta: f64, bias: BiasSchedule) -> Self {
        Self {
            alpha,
            beta,
            bias,
            horizon: FORECAST_HORIZON,
            expected_final_demand: 800,
        }
    }

    pub fn unbiased(alpha: f64) -> Self {
        Self::new(alpha, 0.0, BiasSchedule::Unbiased)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.horizon > 10 {
            return Err(Error::Config("forecast horizon above 10 has no bias fractions".into()));
        }
        Ok(())
    }

    /// Expected value of the update applied `j` periods before delivery.
    pub fn update_mean(&self, j: u32) -> f64 {
        self.beta * self.bias.fraction(j) * self.expected_final_demand as f64
    }

    pub fn update_std(&self) -> f64 {
        self.alpha * self.expected_final_demand as f64
    }
}

/// Long-term forecast chosen so that the expected final order equals the
/// expected demand: permanent biases are pre-compensated. Never negative.
pub fn long_term_forecast(scenario: &ScenarioParams) -> Pieces {
    let d = scenario.expected_final_demand as f64;
    if scenario.bias.is_permanent() {
        let total: f64 = (1..=scenario.horizon)
            .map(|j| scenario.beta * scenario.bias.fraction(j))
            .sum();
        ((d * (1.0 - total)).round() as Pieces).max(0)
    } else {
        scenario.expected_final_demand
    }
}

/// Draws one forecast update given the forecast before the update.
///
/// The normal `N(mean, std)` is truncated to `[-prev, prev + 2 mean]`, an
/// interval symmetric about the mean. If the interval is empty (underbooking
/// with `prev <= -mean`) the update is zero. The draw is rounded to whole
/// pieces.
pub fn sample_update<R: Rng + ?Sized>(prev: Pieces, mean: f64, std: f64, rng: &mut R) -> Pieces {
    debug_assert!(prev >= 0 && std >= 0.0);
    let lo = -(prev as f64);
    let hi = prev as f64 + 2.0 * mean;
    if mean < 0.0 && (prev as f64) <= -mean {
        return 0;
    }
    let clamped_mean = || mean.clamp(lo, hi.max(lo));
    let draw = if std == 0.0 || hi <= lo {
        clamped_mean()
    } else {
        let normal = Normal::new(mean, std).expect("finite std");
        (0..MAX_REJECTIONS)
            .map(|_| normal.sample(rng))
            .find(|x| (lo..=hi).contains(x))
            .unwrap_or_else(clamped_mean)
    };
    (draw.round() as Pieces).max(-prev)
}

/// One evolving forecast `D_{k,i,j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastStream {
    pub product: ItemId,
    pub due_date: Period,
    pub long_term: Pieces,
    pub current_value: Pieces,
    /// Applied updates `(j, epsilon)` in application order.
    pub updates: Vec<(u32, Pieces)>,
    /// Next `j` still to be applied; 0 means the stream is final.
    next_j: u32,
}

impl ForecastStream {
    pub fn new(product: ItemId, due_date: Period, scenario: &ScenarioParams) -> Self {
        let long_term = long_term_forecast(scenario);
        Self {
            product,
            due_date,
            long_term,
            current_value: long_term,
            updates: Vec::new(),
            next_j: scenario.horizon,
        }
    }

    pub fn is_final(&self) -> bool {
        self.next_j == 0
    }

    /// Applies an externally supplied update `epsilon` for `j` periods
    /// before delivery. Updates for `j > horizon` and already applied `j`
    /// are ignored; `j == 0` finalizes the stream without changing it.
    pub fn apply(&mut self, j: u32, epsilon: Pieces) {
        if j > self.next_j || self.is_final() {
            return;
        }
        if j == 0 {
            self.next_j = 0;
            return;
        }
        self.current_value = (self.current_value + epsilon).max(0);
        self.updates.push((j, epsilon));
        self.next_j = j - 1;
    }

    /// Brings the stream to `j` periods before delivery, sampling every
    /// pending update on the way. `j > horizon` leaves it untouched.
    pub fn advance<R: Rng + ?Sized>(&mut self, j: u32, scenario: &ScenarioParams, rng: &mut R) {
        self.advance_with(j, scenario, rng, |_| None);
    }

    fn advance_with<R: Rng + ?Sized>(
        &mut self,
        j: u32,
        scenario: &ScenarioParams,
        rng: &mut R,
        mut injected: impl FnMut(u32) -> Option<Pieces>,
    ) {
        while !self.is_final() && self.next_j >= j {
            let l = self.next_j;
            if l == 0 {
                self.apply(0, 0);
                break;
            }
            let eps = match injected(l) {
                Some(e) => e,
                None => sample_update(
                    self.current_value,
                    scenario.update_mean(l),
                    scenario.update_std(),
                    rng,
                ),
            };
            self.apply(l, eps);
        }
    }

    /// Forecast value seen `j` periods before delivery, as of now.
    pub fn value(&self) -> Pieces {
        self.current_value
    }
}

/// Replacement updates keyed by `(product, due date, j)`.
pub type ReplayUpdates = BTreeMap<(ItemId, Period, u32), Pieces>;

/// All forecast streams of one simulation run.
///
/// Each stream draws from its own ChaCha substream selected by product and
/// due date, so a stream's realization only depends on the run seed and is
/// unaffected by planning decisions or generation order.
#[derive(Clone, Debug)]
pub struct ForecastBook {
    scenario: ScenarioParams,
    seed: u64,
    streams: BTreeMap<(ItemId, Period), (ForecastStream, ChaCha8Rng)>,
    replay: Option<ReplayUpdates>,
}

/// ChaCha stream id for a forecast substream.
pub fn substream_id(product: ItemId, due_date: Period) -> u64 {
    (1u64 << 63) | ((product.0 as u64) << 32) | (due_date as u64 & 0xffff_ffff)
}

pub fn substream_rng(seed: u64, product: ItemId, due_date: Period) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(substream_id(product, due_date));
    rng
}

impl ForecastBook {
    pub fn new(scenario: ScenarioParams, seed: u64) -> Self {
        Self {
            scenario,
            seed,
            streams: BTreeMap::new(),
            replay: None,
        }
    }

    /// Injected updates take precedence over sampling wherever present.
    pub fn with_replay(mut self, replay: ReplayUpdates) -> Self {
        self.replay = Some(replay);
        self
    }

    pub fn scenario(&self) -> &ScenarioParams {
        &self.scenario
    }

    fn entry(&mut self, product: ItemId, due: Period) -> &mut (ForecastStream, ChaCha8Rng) {
        let scenario = self.scenario;
        let seed = self.seed;
        self.streams.entry((product, due)).or_insert_with(|| {
            (
                ForecastStream::new(product, due, &scenario),
                substream_rng(seed, product, due),
            )
        })
    }

    /// Applies this period's update to every stream due within the horizon.
    pub fn update(&mut self, pattern: &DemandPattern, products: &[ItemId], period: Period) {
        let h = self.scenario.horizon as Period;
        for &product in products {
            for due in period..=period + h {
                if pattern.is_due(product, due) {
                    self.advance_stream(product, due, period);
                }
            }
        }
    }

    fn advance_stream(&mut self, product: ItemId, due: Period, period: Period) {
        let j = (due - period).max(0) as u32;
        let scenario = self.scenario;
        let replay = self.replay.take();
        {
            let (stream, rng) = self.entry(product, due);
            stream.advance_with(j, &scenario, rng, |l| {
                replay.as_ref().and_then(|r| r.get(&(product, due, l)).copied())
            });
        }
        self.replay = replay;
    }

    /// Current forecast for a due date, materializing the stream if needed.
    pub fn forecast(&mut self, product: ItemId, due: Period) -> Pieces {
        self.entry(product, due).0.current_value
    }

    /// Final order amount `D_{k,i,0}`; finalizes the stream.
    pub fn firm(&mut self, product: ItemId, due: Period) -> Pieces {
        self.advance_stream(product, due, due);
        self.entry(product, due).0.current_value
    }

    pub fn stream(&self, product: ItemId, due: Period) -> Option<&ForecastStream> {
        self.streams.get(&(product, due)).map(|(s, _)| s)
    }

    pub fn streams(&self) -> impl Iterator<Item = &ForecastStream> {
        self.streams.values().map(|(s, _)| s)
    }

    /// Gross requirements per product for periods `period .. period + horizon`.
    ///
    /// Due periods carry the current forecast (the long-term value when
    /// more than `H` periods away); all other periods carry zero.
    pub fn gross_requirements(
        &mut self,
        pattern: &DemandPattern,
        products: &[ItemId],
        period: Period,
        horizon: usize,
    ) -> BTreeMap<ItemId, Vec<Pieces>> {
        let mut out = BTreeMap::new();
        for &product in products {
            let row = (0..horizon)
                .map(|tau| {
                    let due = period + tau as Period;
                    if pattern.is_due(product, due) {
                        self.forecast(product, due)
                    } else {
                        0
                    }
                })
                .collect();
            out.insert(product, row);
        }
        out
    }

    /// Writes `product,due_date,j,epsilon,value` rows for every applied
    /// update.
    pub fn dump_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for stream in self.streams() {
            let mut value = stream.long_term;
            for &(j, eps) in &stream.updates {
                value = (value + eps).max(0);
                w.serialize(StreamDumpRow {
                    product: stream.product.0,
                    due_date: stream.due_date,
                    j,
                    epsilon: eps,
                    value,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamDumpRow {
    pub product: u32,
    pub due_date: Period,
    pub j: u32,
    pub epsilon: Pieces,
    pub value: Pieces,
}

/// Reads a stream dump back as replay updates.
pub fn read_replay<R: Read>(reader: R) -> Result<ReplayUpdates> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = ReplayUpdates::new();
    for row in r.deserialize() {
        let row: StreamDumpRow = row?;
        out.insert((ItemId(row.product), row.due_date, row.j), row.epsilon);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{build_default_system, UtilizationLevel};

    fn replay(x: Pieces, eps: [Pieces; 10]) -> Vec<Pieces> {
        let scenario = ScenarioParams::unbiased(0.04);
        let mut s = ForecastStream::new(ItemId(10), 40, &scenario);
        s.long_term = x;
        s.current_value = x;
        let mut values = vec![s.value()];
        for (k, e) in eps.iter().enumerate() {
            s.apply(10 - k as u32, *e);
            values.push(s.value());
        }
        s.apply(0, 0);
        values.push(s.value());
        values
    }

    #[test]
    fn replays_published_streams() {
        assert_eq!(
            replay(800, [24, 32, -15, -47, 123, 27, -125, 56, -58, -78]),
            vec![800, 824, 856, 841, 794, 917, 944, 819, 875, 817, 739, 739]
        );
        assert_eq!(
            replay(480, [56, 64, 17, -15, 155, 59, -93, 88, -26, -46]),
            vec![480, 536, 600, 617, 602, 757, 816, 723, 811, 785, 739, 739]
        );
    }

    #[test]
    fn long_term_values() {
        assert_eq!(long_term_forecast(&ScenarioParams::new(0.04, 1.0, BiasSchedule::PermUnder)), 480);
        assert_eq!(long_term_forecast(&ScenarioParams::new(0.04, 1.0, BiasSchedule::PermOver)), 1120);
        assert_eq!(long_term_forecast(&ScenarioParams::new(0.04, 0.0, BiasSchedule::PermOver)), 800);
        assert_eq!(long_term_forecast(&ScenarioParams::new(0.04, 1.0, BiasSchedule::TempOver)), 800);
        assert_eq!(long_term_forecast(&ScenarioParams::new(0.04, 4.0, BiasSchedule::PermUnder)), 0);
    }

    #[test]
    fn bias_schedules() {
        for b in BiasSchedule::ALL {
            let sum: f64 = b.fractions().iter().sum();
            match b {
                BiasSchedule::Unbiased => assert!(b.fractions().iter().all(|&x| x == 0.0)),
                BiasSchedule::TempOver | BiasSchedule::TempUnder => assert!(sum.abs() < 1e-12),
                _ => assert!(b.fractions().iter().all(|&x| x.abs() == 0.04)),
            }
            assert_eq!(BiasSchedule::parse(b.label()), Some(b));
        }
        assert_eq!(BiasSchedule::TempOver.fraction(6), 0.08);
        assert_eq!(BiasSchedule::TempOver.fraction(3), -0.08);
        assert_eq!(BiasSchedule::TempOver.fraction(0), 0.0);
    }

    #[test]
    fn degenerate_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_update(20, -32.0, 32.0, &mut rng), 0);
        assert_eq!(sample_update(800, 0.0, 0.0, &mut rng), 0);
        assert_eq!(sample_update(0, 0.0, 40.0, &mut rng), 0);
        assert_eq!(sample_update(10, 32.0, 0.0, &mut rng), 32);
    }

    #[test]
    fn updates_stay_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for prev in [0, 1, 5, 40, 800] {
            for mean in [-64.0, -32.0, 0.0, 32.0, 64.0] {
                for _ in 0..200 {
                    let e = sample_update(prev, mean, 96.0, &mut rng);
                    assert!(e >= -prev);
                    assert!(e as f64 <= (prev as f64 + 2.0 * mean).max(0.0) + 0.5);
                }
            }
        }
    }

    #[test]
    fn null_scenario_is_constant() {
        let scenario = ScenarioParams::unbiased(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ForecastStream::new(ItemId(10), 40, &scenario);
        for j in (0..=12).rev() {
            s.advance(j, &scenario, &mut rng);
            assert_eq!(s.value(), 800);
        }
        assert!(s.is_final());
    }

    #[test]
    fn advance_beyond_horizon_is_noop() {
        let scenario = ScenarioParams::unbiased(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = ForecastStream::new(ItemId(10), 40, &scenario);
        s.advance(11, &scenario, &mut rng);
        assert_eq!(s.value(), 800);
        assert!(s.updates.is_empty());
        s.advance(4, &scenario, &mut rng);
        assert_eq!(s.updates.len(), 7);
        let sum: Pieces = s.updates.iter().map(|u| u.1).sum();
        assert_eq!(s.value(), 800 + sum);
    }

    #[test]
    fn gross_requirements_window() {
        let sys = build_default_system(UtilizationLevel::Low);
        let products: Vec<_> = sys.final_products().map(|p| p.id).collect();
        let mut book = ForecastBook::new(ScenarioParams::unbiased(0.0), 7);
        let g = book.gross_requirements(&sys.demand, &products, 1, 8);
        assert!(g.values().all(|row| row.iter().all(|&x| x == 0)));

        let g = book.gross_requirements(&sys.demand, &products, 1, 30);
        assert_eq!(g[&ItemId(10)][12], 800);
        assert_eq!(g[&ItemId(10)][13], 0);

        let mut replay = ReplayUpdates::new();
        for (j, e) in (4..=10).zip([10, 20, -4, 30, 0, 0, 0]) {
            replay.insert((ItemId(10), 25, j), e);
        }
        let mut book = ForecastBook::new(ScenarioParams::unbiased(0.04), 7).with_replay(replay);
        for t in 15..=21 {
            book.update(&sys.demand, &products, t);
        }
        let g = book.gross_requirements(&sys.demand, &products, 21, 12);
        assert_eq!(g[&ItemId(10)][4], 856);
    }

    #[test]
    fn dump_and_replay_roundtrip() {
        let sys = build_default_system(UtilizationLevel::Low);
        let products: Vec<_> = sys.final_products().map(|p| p.id).collect();
        let scenario = ScenarioParams::unbiased(0.08);
        let mut a = ForecastBook::new(scenario, 11);
        for t in 1..=60 {
            a.update(&sys.demand, &products, t);
        }
        let mut buf = Vec::new();
        a.dump_csv(&mut buf).unwrap();
        let replay = read_replay(buf.as_slice()).unwrap();
        let mut b = ForecastBook::new(scenario, 999).with_replay(replay);
        for t in 1..=60 {
            b.update(&sys.demand, &products, t);
        }
        for s in a.streams() {
            assert_eq!(b.stream(s.product, s.due_date).unwrap().value(), s.value());
        }
    }
}
