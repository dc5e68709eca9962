//! Deterministic synthesis of the training database.
//!
//! Each triplet starts from a sparse generating image: a given number of
//! source points at random locations with random brightness on a black
//! background, band-limited by a circular aperture in the frequency plane.
//! Propagating the generating image over `-z` and rectifying yields the
//! interferogram; refocusing the interferogram over `+z` and rectifying
//! yields the magnitude hologram. The number of points per triplet is
//! logarithmically spaced across the dataset.
//!
//! Reproducibility contract: one documented PRNG (splitmix64), per-triplet
//! seeds derived from the master seed and the index alone, and independent
//! max-normalization of every stored image. The same configuration always
//! produces byte-identical trees.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm;
use crate::rng::{self, SplitMix64};
use crate::wavefield::{
    dft2, propagate_with, reconstruct_hologram, rectify, transfer_function, ComplexField,
    Direction, PropagationParams, RealImage,
};

/// Manifest schema version.
pub const FORMAT_VERSION: u32 = 1;

// Salt mixed into the master seed to derive the split-shuffle stream,
// keeping it disjoint from the per-triplet seed stream.
const SPLIT_SALT: u64 = 0x7370_6c69_745f_7631; // "split_v1"

/// Full description of a dataset build. `params.z` is the reconstruction
/// distance magnitude; synthesis applies `-z` and `+z` internally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Number of triplets (M).
    pub m: usize,
    /// Image side length in pixels.
    pub n: usize,
    pub n_points_min: usize,
    pub n_points_max: usize,
    pub params: PropagationParams,
    pub master_seed: u64,
    pub validation_fraction: f64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Parameter("dataset must have at least 1 triplet".into()));
        }
        if self.n_points_min < 1
            || self.n_points_min > self.n_points_max
            || self.n_points_max > self.n * self.n
        {
            return Err(Error::Parameter(format!(
                "point counts must satisfy 1 <= min <= max <= n^2, got [{}, {}] for n = {}",
                self.n_points_min, self.n_points_max, self.n
            )));
        }
        // Re-run the constructor checks in case the fields were set directly.
        PropagationParams::new(
            self.params.wavelength,
            self.params.pixel_pitch,
            self.params.n,
            self.params.z,
        )?;
        if self.params.n != self.n {
            return Err(Error::dimension("DatasetConfig", self.n, self.params.n));
        }
        if self.params.z <= 0.0 {
            return Err(Error::Parameter(
                "dataset z is a distance magnitude and must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Parameter(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.validation_count() >= self.m {
            return Err(Error::Parameter(
                "validation split would consume the whole dataset".into(),
            ));
        }
        Ok(())
    }

    /// Number of validation entries: `round(validation_fraction * m)`.
    pub fn validation_count(&self) -> usize {
        (self.validation_fraction * self.m as f64).round() as usize
    }

    /// Seed of triplet `index`, derived from the master seed alone.
    pub fn triplet_seed(&self, index: usize) -> u64 {
        rng::stream_nth(self.master_seed, index as u64)
    }
}

/// One generated triplet plus its provenance.
#[derive(Clone, Debug)]
pub struct ImageTriplet {
    pub a: RealImage,
    pub i: RealImage,
    pub h: RealImage,
    pub seed: u64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub n_points: usize,
    pub split: Split,
    pub a_path: String,
    pub i_path: String,
    pub h_path: String,
}

/// On-disk index of a generated dataset (`manifest.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: DatasetConfig,
    pub prng_name: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        let bad = |reason: String| Error::Manifest {
            path: path.to_path_buf(),
            reason,
        };
        if manifest.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {}",
                manifest.format_version
            )));
        }
        if manifest.prng_name != rng::PRNG_NAME {
            return Err(bad(format!("unknown prng_name {:?}", manifest.prng_name)));
        }
        manifest.config.validate()?;
        if manifest.entries.len() != manifest.config.m {
            return Err(bad(format!(
                "expected {} entries, found {}",
                manifest.config.m,
                manifest.entries.len()
            )));
        }
        let val = manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Validation)
            .count();
        if val != manifest.config.validation_count() {
            return Err(bad(format!(
                "expected {} validation entries, found {val}",
                manifest.config.validation_count()
            )));
        }
        Ok(manifest)
    }

    pub fn train_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Train)
    }

    pub fn validation_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Validation)
    }
}

/// Number of source points per triplet, logarithmically spaced from
/// `n_points_min` to `n_points_max` and rounded to integers.
pub fn point_counts(config: &DatasetConfig) -> Vec<usize> {
    let (lo, hi, m) = (config.n_points_min, config.n_points_max, config.m);
    if m == 1 {
        return vec![lo];
    }
    let (ln_lo, ln_hi) = ((lo as f64).ln(), (hi as f64).ln());
    (0..m)
        .map(|j| {
            let t = j as f64 / (m - 1) as f64;
            let v = (ln_lo + t * (ln_hi - ln_lo)).exp().round() as usize;
            v.clamp(lo, hi)
        })
        .collect()
}

/// Sparse random generating image: `n_points` pixels drawn uniformly with
/// replacement, brightness uniform on (0, 1]; on collision the later draw
/// wins.
pub fn generate_source_image(n: usize, n_points: usize, seed: u64) -> Result<RealImage> {
    if n_points < 1 || n_points > n * n {
        return Err(Error::Parameter(format!(
            "n_points must lie in [1, {}], got {n_points}",
            n * n
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut image = RealImage::zeros(n);
    for _ in 0..n_points {
        let location = rng.next_index(n * n);
        let brightness = rng.next_f64_open0();
        image.set(location / n, location % n, brightness);
    }
    Ok(image)
}

/// Band-limits an image with a circular aperture in the frequency plane.
///
/// The aperture diameter is half the diagonal of the reciprocal plane, so
/// the radius is `sqrt(2) * n / 4` frequency samples around DC under the
/// wraparound metric. Samples at exactly the radius are kept; the comparison
/// `8 * (cx^2 + cy^2) <= n^2` is exact in integers, so the boundary is
/// reproducible. The output is the real part clamped to zero.
pub fn lowpass_circular(image: &RealImage) -> Result<RealImage> {
    let n = image.n();
    let spectrum = dft2(&image.to_complex()?, Direction::Forward);
    let half = n as i64 / 2;
    let mut data = spectrum.data().to_vec();
    for my in 0..n as i64 {
        let cy = if my < half { my } else { my - n as i64 };
        for mx in 0..n as i64 {
            let cx = if mx < half { mx } else { mx - n as i64 };
            if 8 * (cx * cx + cy * cy) as u64 > (n * n) as u64 {
                data[(my * n as i64 + mx) as usize] = num_complex::Complex64::new(0.0, 0.0);
            }
        }
    }
    let filtered = dft2(&ComplexField::new(n, data)?, Direction::Inverse);
    Ok(RealImage::new(
        n,
        filtered.data().iter().map(|c| c.re.max(0.0)).collect(),
    )?)
}

/// Interferogram of a generating image: propagate over `-z`, rectify.
/// `params.z` holds the distance magnitude and must be positive.
pub fn synth_interferogram(a: &RealImage, params: &PropagationParams) -> Result<RealImage> {
    if params.z <= 0.0 {
        return Err(Error::Parameter(format!(
            "interferogram synthesis takes the distance magnitude, got z = {}",
            params.z
        )));
    }
    let sensor = crate::wavefield::propagate(&a.to_complex()?, &params.with_z(-params.z))?;
    Ok(rectify(&sensor))
}

/// Runs the full pipeline for one triplet and max-normalizes each image.
pub fn synth_triplet(n_points: usize, seed: u64, config: &DatasetConfig) -> Result<ImageTriplet> {
    config.validate()?;
    let ctx = TripletContext::new(config);
    ctx.synth(n_points, seed)
}

// Precomputed transfer functions, shared across triplets of one build.
struct TripletContext {
    n: usize,
    backward: ComplexField, // -z, object to sensor
    forward: ComplexField,  // +z, sensor to object
}

impl TripletContext {
    fn new(config: &DatasetConfig) -> Self {
        let params = config.params;
        TripletContext {
            n: config.n,
            backward: transfer_function(&params.with_z(-params.z)),
            forward: transfer_function(&params),
        }
    }

    fn synth(&self, n_points: usize, seed: u64) -> Result<ImageTriplet> {
        let a = lowpass_circular(&generate_source_image(self.n, n_points, seed)?)?;
        let i = rectify(&propagate_with(&a.to_complex()?, &self.backward)?);
        let h = rectify(&propagate_with(&i.to_complex()?, &self.forward)?);
        Ok(ImageTriplet {
            a: a.normalize_max(),
            i: i.normalize_max(),
            h: h.normalize_max(),
            seed,
            n_points,
        })
    }
}

/// Split assignment: a seeded shuffle of all indices, with the final
/// `validation_count` positions becoming the validation set.
pub fn split_assignment(config: &DatasetConfig) -> Vec<Split> {
    let m = config.m;
    let mut order: Vec<usize> = (0..m).collect();
    SplitMix64::new(rng::mix(config.master_seed ^ SPLIT_SALT)).shuffle(&mut order);
    let mut splits = vec![Split::Train; m];
    for &idx in &order[m - config.validation_count()..] {
        splits[idx] = Split::Validation;
    }
    splits
}

/// Generates every triplet, writes `a/%06d.pgm`, `i/%06d.pgm`, `h/%06d.pgm`
/// under `output_dir`, and returns the manifest (also written as
/// `manifest.json`). `jobs` generation threads run over disjoint index
/// ranges; the output is identical for any thread count. On failure the
/// partially written image directories are removed.
pub fn build_dataset(config: &DatasetConfig, output_dir: &Path, jobs: usize) -> Result<DatasetManifest> {
    config.validate()?;
    let result = build_inner(config, output_dir, jobs.max(1));
    if result.is_err() {
        for sub in ["a", "i", "h"] {
            let _ = fs::remove_dir_all(output_dir.join(sub));
        }
        let _ = fs::remove_file(output_dir.join("manifest.json"));
    }
    result
}

fn build_inner(config: &DatasetConfig, output_dir: &Path, jobs: usize) -> Result<DatasetManifest> {
    for sub in ["a", "i", "h"] {
        let dir = output_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let counts = point_counts(config);
    let splits = split_assignment(config);
    let entries: Vec<ManifestEntry> = (0..config.m)
        .map(|j| ManifestEntry {
            index: j,
            seed: config.triplet_seed(j),
            n_points: counts[j],
            split: splits[j],
            a_path: format!("a/{j:06}.pgm"),
            i_path: format!("i/{j:06}.pgm"),
            h_path: format!("h/{j:06}.pgm"),
        })
        .collect();

    let write_range = |range: std::ops::Range<usize>| -> Result<()> {
        let ctx = TripletContext::new(config);
        for j in range {
            let entry = &entries[j];
            let triplet = ctx.synth(entry.n_points, entry.seed)?;
            pgm::write_pgm16(&output_dir.join(&entry.a_path), &triplet.a)?;
            pgm::write_pgm16(&output_dir.join(&entry.i_path), &triplet.i)?;
            pgm::write_pgm16(&output_dir.join(&entry.h_path), &triplet.h)?;
        }
        Ok(())
    };

    if jobs == 1 {
        write_range(0..config.m)?;
    } else {
        let chunk = config.m.div_ceil(jobs);
        let first_error: Mutex<Option<Error>> = Mutex::new(None);
        std::thread::scope(|scope| {
            for w in 0..jobs {
                let range = (w * chunk).min(config.m)..((w + 1) * chunk).min(config.m);
                if range.is_empty() {
                    continue;
                }
                let first_error = &first_error;
                let write_range = &write_range;
                scope.spawn(move || {
                    if let Err(e) = write_range(range) {
                        first_error.lock().unwrap().get_or_insert(e);
                    }
                });
            }
        });
        if let Some(e) = first_error.into_inner().unwrap() {
            return Err(e);
        }
    }

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        prng_name: rng::PRNG_NAME.to_string(),
        entries,
    };
    manifest.save(&output_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Resolves an entry path against the directory containing the manifest.
pub fn resolve_path(manifest_dir: &Path, entry_path: &str) -> PathBuf {
    manifest_dir.join(entry_path)
}
