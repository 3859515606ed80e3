//! Random initial conditions and coefficients, trajectory files, and the
//! chronological history/target windowing used for training and testing.

use std::f64::consts::PI;
use std::io::{Cursor, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field2D, GridSpec};
use crate::io::{write_atomic, LeReader, LeWriter};
use crate::pde::{simulate, PdeKind, PdeParams, TemporalSpec, Trajectory};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"ARTS";
pub const TRAJECTORY_VERSION: u32 = 1;

/// Deterministic generator used for every sampled quantity.
pub type SampleRng = ChaCha8Rng;

/// Generator for sample `index` of a set seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRanges {
    pub n_waves: usize,
    pub max_amplitude: f64,
    pub wavenumbers: Vec<i32>,
    pub domain_length: f64,
}

impl Default for IcRanges {
    fn default() -> Self {
        Self {
            n_waves: 5,
            max_amplitude: 0.5,
            wavenumbers: vec![1, 2, 3],
            domain_length: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineWave {
    pub amplitude: f64,
    pub l_x: i32,
    pub l_y: i32,
    pub phase: f64,
}

/// Sum of sine waves `Σ A_j sin(2π l_xj x / L + 2π l_yj y / L + φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditionSpec {
    pub waves: Vec<SineWave>,
    pub domain_length: f64,
}

impl InitialConditionSpec {
    pub fn evaluate(&self, grid: GridSpec) -> Field2D {
        let k = 2.0 * PI / self.domain_length;
        Field2D::from_fn(grid, |x, y| self.value_at(k, x, y))
    }

    fn value_at(&self, k: f64, x: f64, y: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| w.amplitude * (k * w.l_x as f64 * x + k * w.l_y as f64 * y + w.phase).sin())
            .sum()
    }
}

pub fn sample_initial_condition<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &IcRanges,
    grid: GridSpec,
) -> (InitialConditionSpec, Field2D) {
    let pick = |rng: &mut R| ranges.wavenumbers[rng.random_range(0..ranges.wavenumbers.len())];
    let waves = (0..ranges.n_waves)
        .map(|_| SineWave {
            amplitude: rng.random_range(-ranges.max_amplitude..=ranges.max_amplitude),
            l_x: pick(rng),
            l_y: pick(rng),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect();
    let spec = InitialConditionSpec {
        waves,
        domain_length: ranges.domain_length,
    };
    let field = spec.evaluate(grid);
    (spec, field)
}

/// Draw coefficients uniformly from the per-kind ranges.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, kind: PdeKind) -> PdeParams {
    match kind {
        PdeKind::Advection => {
            let c_x = rng.random_range(0.1..=2.5);
            let c_y = rng.random_range(0.1..=2.5);
            PdeParams::advection(c_x, c_y)
        }
        PdeKind::Heat => PdeParams::heat(rng.random_range(2e-3..=2e-2)),
        PdeKind::Burgers => {
            let c_x = rng.random_range(0.5..=1.0);
            let c_y = rng.random_range(0.5..=1.0);
            let nu = rng.random_range(7.5e-3..=1.5e-2);
            PdeParams::burgers(c_x, c_y, nu)
        }
    }
}

/// True if `params` lies inside the sampling ranges for its kind.
pub fn params_in_range(params: &PdeParams) -> bool {
    let within = |v: f64, lo: f64, hi: f64| (lo..=hi).contains(&v);
    match params.kind {
        PdeKind::Advection => {
            within(params.c_x, 0.1, 2.5) && within(params.c_y, 0.1, 2.5) && params.nu == 0.0
        }
        PdeKind::Heat => within(params.nu, 2e-3, 2e-2) && params.c_x == 0.0 && params.c_y == 0.0,
        PdeKind::Burgers => {
            within(params.c_x, 0.5, 1.0) && within(params.c_y, 0.5, 1.0) && within(params.nu, 7.5e-3, 1.5e-2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub params: PdeParams,
    pub seed: u64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub grid: GridSpec,
    pub temporal: TemporalSpec,
    pub samples: Vec<Sample>,
    pub seed: u64,
}

/// Simulate one sample from its own seed.
pub fn generate_sample(
    kind: PdeKind,
    grid: GridSpec,
    temporal: &TemporalSpec,
    ranges: &IcRanges,
    sample_seed: u64,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let params = sample_params(&mut rng, kind);
    let (_, ic) = sample_initial_condition(&mut rng, ranges, grid);
    let trajectory = simulate(&params, &ic, temporal)?;
    Ok(Sample {
        params,
        seed: sample_seed,
        trajectory,
    })
}

/// Generate `n_samples` trajectories; sample `i` is seeded with `seed ^ i`.
pub fn generate_set(
    kind: PdeKind,
    n_samples: usize,
    grid: GridSpec,
    temporal: TemporalSpec,
    ranges: &IcRanges,
    seed: u64,
) -> Result<TrajectorySet> {
    let samples = (0..n_samples as u64)
        .map(|i| generate_sample(kind, grid, &temporal, ranges, seed ^ i))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet {
        grid,
        temporal,
        samples,
        seed,
    })
}

impl TrajectorySet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = LeWriter(Vec::new());
        w.0.extend_from_slice(&TRAJECTORY_MAGIC);
        w.u32(TRAJECTORY_VERSION)?;
        w.u32(to_u32(self.samples.len(), "n_samples")?)?;
        w.u32(to_u32(self.temporal.n_snapshots, "n_snapshots")?)?;
        w.u32(to_u32(self.grid.nx, "nx")?)?;
        w.u32(to_u32(self.grid.ny, "ny")?)?;
        w.f64(self.temporal.t_start)?;
        w.f64(self.temporal.t_end)?;
        for s in &self.samples {
            if s.trajectory.grid() != &self.grid || s.trajectory.n_snapshots() != self.temporal.n_snapshots {
                return Err(Error::Format("sample does not match set grid/temporal spec".into()));
            }
            w.u32(s.params.kind.id())?;
            w.f64(s.params.c_x)?;
            w.f64(s.params.c_y)?;
            w.f64(s.params.nu)?;
            w.u64(s.seed)?;
            w.f64s(s.trajectory.data())?;
        }
        Ok(w.0)
    }

    /// Decode a trajectory file. The spatial extent is not stored; it is
    /// the `[-L/2, L/2]^2` square of the given domain length.
    pub fn from_bytes(bytes: &[u8], domain_length: f64) -> Result<Self> {
        Self::read_from(Cursor::new(bytes), domain_length)
    }

    fn read_from(r: impl Read, domain_length: f64) -> Result<Self> {
        let mut r = LeReader::new(r, "trajectory file");
        let magic: [u8; 4] = r.bytes()?;
        if magic != TRAJECTORY_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"ARTS\"")));
        }
        let version = r.u32()?;
        if version != TRAJECTORY_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_samples = r.u32()? as usize;
        let n_snapshots = r.u32()? as usize;
        let nx = r.u32()? as usize;
        let ny = r.u32()? as usize;
        let t_start = r.f64()?;
        let t_end = r.f64()?;
        let half = domain_length / 2.0;
        let grid = GridSpec::new(nx, ny, -half, half, -half, half).map_err(|e| Error::Format(e.to_string()))?;
        let temporal = TemporalSpec::new(t_start, t_end, n_snapshots).map_err(|e| Error::Format(e.to_string()))?;
        let mut samples = Vec::with_capacity(n_samples.min(1024));
        for _ in 0..n_samples {
            let id = r.u32()?;
            let kind = PdeKind::from_id(id).ok_or_else(|| Error::Format(format!("unknown pde id {id}")))?;
            let c_x = r.f64()?;
            let c_y = r.f64()?;
            let nu = r.f64()?;
            let seed = r.u64()?;
            let data = r.f64s(n_snapshots * nx * ny)?;
            samples.push(Sample {
                params: PdeParams { kind, c_x, c_y, nu },
                seed,
                trajectory: Trajectory::from_flat(grid, n_snapshots, data)?,
            });
        }
        r.finish()?;
        let seed = samples.first().map_or(0, |s| s.seed);
        Ok(Self {
            grid,
            temporal,
            samples,
            seed,
        })
    }
}

pub fn write_trajectory_set(path: &Path, set: &TrajectorySet) -> Result<()> {
    write_atomic(path, &set.to_bytes()?)
}

pub fn read_trajectory_set(path: &Path, domain_length: f64) -> Result<TrajectorySet> {
    let file = std::fs::File::open(path)?;
    TrajectorySet::read_from(std::io::BufReader::new(file), domain_length)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history_len: usize,
    pub split_fraction: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            history_len: 30,
            split_fraction: 0.8,
        }
    }
}

impl WindowSpec {
    /// First snapshot index belonging to the test segment.
    pub fn split_index(&self, n_snapshots: usize) -> usize {
        (self.split_fraction * n_snapshots as f64).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Snapshot index ranges of one history/target window.
///
/// History covers `start .. start + history_len`, targets follow directly
/// after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub history_len: usize,
    pub n_targets: usize,
}

impl Window {
    /// Index of the newest history snapshot (the current time `t`).
    pub fn history_end(&self) -> usize {
        self.start + self.history_len - 1
    }

    pub fn history(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.history_len
    }

    pub fn targets(&self) -> std::ops::Range<usize> {
        self.start + self.history_len..self.start + self.history_len + self.n_targets
    }

    /// Snapshot just before the history, if the trajectory has one.
    pub fn lag_index(&self) -> Option<usize> {
        self.start.checked_sub(1)
    }
}

/// Train windows keep every target before the split. The test split is a
/// single window whose history is the last `N` training snapshots and whose
/// targets are every snapshot after the split.
pub fn build_windows(n_snapshots: usize, w: &WindowSpec, m: usize, split: Split) -> Result<Vec<Window>> {
    if m == 0 {
        return Err(Error::InvalidConfig("rollout depth M must be at least 1".into()));
    }
    if w.history_len == 0 || !(w.split_fraction > 0.0 && w.split_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("invalid window spec {w:?}")));
    }
    let split_at = w.split_index(n_snapshots);
    let n = w.history_len;
    match split {
        Split::Train => {
            if split_at < n + m {
                return Err(Error::InsufficientLength(format!(
                    "{split_at} training snapshots cannot hold history {n} plus {m} targets"
                )));
            }
            Ok((0..=split_at - n - m)
                .map(|start| Window {
                    start,
                    history_len: n,
                    n_targets: m,
                })
                .collect())
        }
        Split::Test => {
            if split_at < n || split_at >= n_snapshots {
                return Err(Error::InsufficientLength(format!(
                    "test split at {split_at} of {n_snapshots} leaves no history or no targets"
                )));
            }
            Ok(vec![Window {
                start: split_at - n,
                history_len: n,
                n_targets: n_snapshots - split_at,
            }])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid64() -> GridSpec {
        GridSpec::square(64, -1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let spec = InitialConditionSpec {
            waves: vec![SineWave { amplitude: 0.0, l_x: 2, l_y: 3, phase: 1.0 }; 5],
            domain_length: 2.0,
        };
        assert_eq!(spec.evaluate(grid64()).max_abs(), 0.0);
    }

    #[test]
    fn single_wave_matches_closed_form() {
        let mut waves = vec![SineWave { amplitude: 0.5, l_x: 1, l_y: 0, phase: 0.0 }];
        waves.extend([SineWave { amplitude: 0.0, l_x: 1, l_y: 1, phase: 0.0 }; 4]);
        let spec = InitialConditionSpec { waves, domain_length: 2.0 };
        let f = spec.evaluate(grid64());
        let expect = Field2D::from_fn(grid64(), |x, _| 0.5 * (2.0 * PI * x / 2.0).sin());
        assert!(f.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn sampled_ics_are_bounded_and_periodic() {
        let mut rng = sample_rng(7, 0);
        let ranges = IcRanges::default();
        for _ in 0..50 {
            let (spec, f) = sample_initial_condition(&mut rng, &ranges, grid64());
            assert_eq!(spec.waves.len(), 5);
            assert!(f.max_abs() <= 2.5);
            for w in &spec.waves {
                assert!(w.amplitude.abs() <= 0.5 && (0.0..2.0 * PI).contains(&w.phase));
                assert!([1, 2, 3].contains(&w.l_x) && [1, 2, 3].contains(&w.l_y));
            }
            // evaluating one period to the right reproduces the left edge
            let k = 2.0 * PI / spec.domain_length;
            for j in [0usize, 17, 40] {
                let y = grid64().y(j);
                let wrapped = spec.value_at(k, 1.0, y);
                assert!((wrapped - f.at(0, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn params_stay_in_range() {
        let mut rng = sample_rng(11, 0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let p = sample_params(&mut rng, PdeKind::Advection);
            lo = lo.min(p.c_x);
            hi = hi.max(p.c_x);
            assert!(params_in_range(&p));
        }
        assert!(lo >= 0.1 && hi <= 2.5);
        for _ in 0..10_000 {
            let h = sample_params(&mut rng, PdeKind::Heat);
            assert!(h.nu >= 2e-3 && params_in_range(&h));
            assert!(params_in_range(&sample_params(&mut rng, PdeKind::Burgers)));
        }
    }

    #[test]
    fn params_are_reproducible() {
        let a = sample_params(&mut sample_rng(3, 5), PdeKind::Burgers);
        let b = sample_params(&mut sample_rng(3, 5), PdeKind::Burgers);
        assert_eq!(a, b);
    }

    #[test]
    fn train_window_counts() {
        let w = WindowSpec::default();
        let wins = build_windows(500, &w, 1, Split::Train).unwrap();
        assert_eq!(wins.len(), 370);
        assert_eq!(wins.first().unwrap().history_end(), 29);
        assert_eq!(wins.last().unwrap().history_end(), 398);
        let wins = build_windows(500, &w, 4, Split::Train).unwrap();
        assert_eq!(wins.last().unwrap().history_end(), 395);
        assert_eq!(wins.last().unwrap().targets().end, 400);
    }

    #[test]
    fn too_short_trajectory_is_rejected() {
        let err = build_windows(31, &WindowSpec::default(), 1, Split::Train).unwrap_err();
        assert!(matches!(err, Error::InsufficientLength(_)));
        assert!(build_windows(500, &WindowSpec::default(), 0, Split::Train).is_err());
    }

    #[test]
    fn test_split_starts_after_training_data() {
        let test = build_windows(500, &WindowSpec::default(), 1, Split::Test).unwrap();
        assert_eq!(test.len(), 1);
        assert_eq!(test[0].history(), 370..400);
        assert_eq!(test[0].targets(), 400..500);
        assert_eq!(test[0].lag_index(), Some(369));
    }

    proptest! {
        #[test]
        fn train_and_test_targets_are_disjoint(n in 40usize..600, hist in 1usize..30, m in 1usize..6, frac in 0.5..0.95f64) {
            let w = WindowSpec { history_len: hist, split_fraction: frac };
            if let (Ok(train), Ok(test)) = (build_windows(n, &w, m, Split::Train), build_windows(n, &w, m, Split::Test)) {
                let first_test = test[0].targets().start;
                prop_assert!(train.iter().all(|win| win.targets().end <= first_test));
                prop_assert_eq!(test[0].targets().end, n);
            }
        }
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let grid = GridSpec::square(8, -1.0, 1.0).unwrap();
        let temporal = TemporalSpec::new(0.0, 0.2, 6).unwrap();
        let set = generate_set(PdeKind::Burgers, 3, grid, temporal, &IcRanges::default(), 42).unwrap();
        let bytes = set.to_bytes().unwrap();
        let back = TrajectorySet::from_bytes(&bytes, 2.0).unwrap();
        assert_eq!(back, set);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(TrajectorySet::from_bytes(&bad, 2.0), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(TrajectorySet::from_bytes(&bad, 2.0), Err(Error::Format(_))));
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(TrajectorySet::from_bytes(short, 2.0), Err(Error::TruncatedFile(_))));
    }

    #[test]
    fn empty_set_is_header_only() {
        let grid = GridSpec::square(8, -1.0, 1.0).unwrap();
        let temporal = TemporalSpec::new(0.0, 2.0, 500).unwrap();
        let set = generate_set(PdeKind::Heat, 0, grid, temporal, &IcRanges::default(), 1).unwrap();
        let bytes = set.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 5 * 4 + 2 * 8);
        let back = TrajectorySet::from_bytes(&bytes, 2.0).unwrap();
        assert!(back.samples.is_empty());
    }
}
