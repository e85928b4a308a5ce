//! Binary on-disk cache for assembled collision matrices.
//!
//! Assembling a collision matrix is the expensive step of every experiment
//! (minutes at production sizes on the direct quadrature route), while
//! everything downstream — projection, symbols, semigroups — costs seconds.
//! The cache therefore stores the *raw* assembled pieces (collision
//! frequency plus symmetrized kernel matrix, before null-space projection),
//! keyed by content hashes of the grid and of the model with its assembly
//! options; restoring re-runs the cheap finishing pass, so guard and
//! projection logic always reflect the current code.
//!
//! ## File format
//!
//! One file per piece, named `kern-<gridhash>-<modelhash>-o<slot>.bin`:
//!
//! | bytes            | content                                            |
//! |------------------|----------------------------------------------------|
//! | 8                | magic `BKUQKRN1`                                   |
//! | 4                | format version, little-endian u32 (currently 1)    |
//! | 8                | grid-descriptor hash, little-endian u64            |
//! | 8                | model-descriptor hash, little-endian u64           |
//! | 8                | node count n, little-endian u64                    |
//! | 8·(2 + n + n²)   | little-endian floats: asymmetry defect, gain/loss  |
//! |                  | defect (NaN when the route measures none), ν       |
//! |                  | (n entries), kernel matrix (n², row-major)         |
//!
//! Slot 0 holds the unit hard-sphere piece; slot 1, present for the cubic
//! family only, holds the unit cos³θ piece (the z-derivative building
//! block; proportional-family derivatives are scalar multiples of slot 0 and
//! need no file of their own). Hashes are the leading 8 bytes of SHA-256
//! over the full numeric descriptors — grid nodes and weights; kernel
//! family, coefficients, route, and quadrature orders — so any change of
//! grid or model re-keys the cache.
//!
//! A missing file is a miss. A file whose stored hashes disagree with the
//! requested key is treated as a miss with a warning (the caller rebuilds).
//! A file with a bad magic, wrong version, wrong size, or non-finite payload
//! refuses to load with [`Error::Cache`].

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use crate::assemble::{assemble_direct, assemble_hard_sphere, RawOperator};
use crate::error::{Error, Result};
use crate::grid::AxisymGrid;
use crate::model::CollisionModel;
use crate::operator::{FactoryOptions, OperatorFactory, Provenance, Route};

const MAGIC: &[u8; 8] = b"BKUQKRN1";
const VERSION: u32 = 1;
/// Floats preceding ν in the payload: asymmetry defect, gain/loss defect.
const DIAG_FLOATS: usize = 2;

fn sha_u64(buf: &[u8]) -> u64 {
    let digest = Sha256::digest(buf);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Content hash of the velocity grid (kind tag, parameters, and every node
/// and weight, so rebuilt grids hash equal and changed ones never do).
pub fn grid_hash(grid: &AxisymGrid) -> u64 {
    let mut buf = Vec::with_capacity(64 + 16 * (grid.nz + grid.nrho));
    buf.extend_from_slice(b"axisym2d");
    for v in [grid.xi_max, grid.beta] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [grid.nz as u64, grid.nrho as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for arr in [&grid.z_nodes, &grid.z_weights, &grid.rho_nodes, &grid.rho_weights] {
        for &x in arr.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    sha_u64(&buf)
}

/// Content hash of the kernel model together with the assembly options that
/// shape the stored matrices (route and quadrature orders).
pub fn model_hash(model: &CollisionModel, opts: &FactoryOptions) -> u64 {
    let mut buf = Vec::with_capacity(96);
    buf.extend_from_slice(model.family.name().as_bytes());
    for v in [model.coeff, model.c_z] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.alpha as u64).to_le_bytes());
    buf.push(match opts.hs_route {
        Route::ClosedForm => 0,
        Route::Direct => 1,
    });
    for v in [
        opts.patch.n_theta as u64,
        opts.patch.n_d as u64,
        opts.direct.n_phi_star as u64,
        opts.direct.n_u as u64,
        opts.direct.n_phi_omega as u64,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&opts.gain_loss_tol.to_le_bytes());
    sha_u64(&buf)
}

/// Cache file path for one piece slot under the given keys.
pub fn piece_path(dir: &Path, gh: u64, mh: u64, slot: u32) -> PathBuf {
    dir.join(format!("kern-{gh:016x}-{mh:016x}-o{slot}.bin"))
}

/// Write one raw piece to its cache file (directory created on demand).
pub fn store_raw(path: &Path, gh: u64, mh: u64, n: usize, raw: &RawOperator) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&gh.to_le_bytes())?;
    w.write_all(&mh.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    for &v in [raw.asym_rel, raw.gain_loss_rel.unwrap_or(f64::NAN)]
        .iter()
        .chain(&raw.nu)
        .chain(&raw.ls)
    {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Load one raw piece.
///
/// Returns `Ok(None)` on a miss — no file, or a well-formed file whose
/// stored hashes disagree with the requested key (the latter prints a
/// rebuild warning). Malformed files (magic, version, size, non-finite
/// payload) are refused with [`Error::Cache`].
pub fn load_raw(path: &Path, gh: u64, mh: u64, n: usize) -> Result<Option<RawOperator>> {
    let mut file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let mut header = [0_u8; 8 + 4 + 8 + 8 + 8];
    file.read_exact(&mut header).map_err(|_| {
        Error::Cache(format!("{}: truncated header", path.display()))
    })?;
    if &header[..8] != MAGIC {
        return Err(Error::Cache(format!(
            "{}: bad magic (not a kernel cache file)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Cache(format!(
            "{}: unsupported format version {version} (expected {VERSION})",
            path.display()
        )));
    }
    let file_gh = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let file_mh = u64::from_le_bytes(header[20..28].try_into().unwrap());
    let file_n = u64::from_le_bytes(header[28..36].try_into().unwrap()) as usize;
    if file_gh != gh || file_mh != mh {
        eprintln!(
            "warning: cache file {} holds keys {file_gh:016x}/{file_mh:016x}, \
             expected {gh:016x}/{mh:016x}; rebuilding",
            path.display()
        );
        return Ok(None);
    }
    if file_n != n {
        return Err(Error::Cache(format!(
            "{}: node count {file_n} does not match the grid ({n})",
            path.display()
        )));
    }
    let want = DIAG_FLOATS + n + n * n;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * want {
        return Err(Error::Cache(format!(
            "{}: payload holds {} bytes, expected {} — truncated or damaged",
            path.display(),
            bytes.len(),
            8 * want
        )));
    }
    let mut floats = Vec::with_capacity(want);
    for chunk in bytes.chunks_exact(8) {
        floats.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let asym_rel = floats[0];
    let gain_loss_rel = if floats[1].is_nan() { None } else { Some(floats[1]) };
    let nu = floats[DIAG_FLOATS..DIAG_FLOATS + n].to_vec();
    let ls = floats[DIAG_FLOATS + n..].to_vec();
    if !asym_rel.is_finite()
        || nu.iter().any(|v| !v.is_finite())
        || ls.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Cache(format!(
            "{}: non-finite entries in the payload",
            path.display()
        )));
    }
    Ok(Some(RawOperator { nu, ls, asym_rel, gain_loss_rel }))
}

/// Whether the cache came through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    /// All needed pieces were restored from disk.
    Hit,
    /// At least one piece was assembled fresh (and stored).
    Built,
}

/// Slots a model needs: the hard-sphere piece always, the cos³θ piece for
/// kernels that do not factor through a scalar in z.
fn needed_slots(model: &CollisionModel) -> Vec<u32> {
    if model.scale(0.0).is_none() {
        vec![0, 1]
    } else {
        vec![0]
    }
}

fn assemble_slot(grid: &AxisymGrid, opts: &FactoryOptions, slot: u32) -> RawOperator {
    match slot {
        0 => match opts.hs_route {
            Route::ClosedForm => assemble_hard_sphere(grid, opts.patch),
            Route::Direct => assemble_direct(grid, 1.0, 0.0, opts.direct),
        },
        _ => assemble_direct(grid, 0.0, 1.0, opts.direct),
    }
}

/// Build an operator factory through the cache: restore every needed piece
/// when possible, assemble and store what is missing.
pub fn factory_cached(
    dir: &Path,
    grid: Arc<AxisymGrid>,
    model: CollisionModel,
    opts: FactoryOptions,
) -> Result<(OperatorFactory, CacheOutcome)> {
    let gh = grid_hash(&grid);
    let mh = model_hash(&model, &opts);
    let n = grid.n();
    let slots = needed_slots(&model);
    let mut raws = Vec::with_capacity(slots.len());
    let mut outcome = CacheOutcome::Hit;
    let mut fresh: Vec<PathBuf> = Vec::new();
    for &slot in &slots {
        let path = piece_path(dir, gh, mh, slot);
        let raw = match load_raw(&path, gh, mh, n)? {
            Some(raw) => raw,
            None => {
                let raw = assemble_slot(&grid, &opts, slot);
                store_raw(&path, gh, mh, n, &raw)?;
                fresh.push(path);
                outcome = CacheOutcome::Built;
                raw
            }
        };
        raws.push(raw);
    }
    let provenance = match opts.hs_route {
        Route::ClosedForm => Provenance::ClosedForm,
        Route::Direct => Provenance::Direct,
    };
    let mut raws = raws.into_iter();
    let hs_raw = raws.next().expect("slot 0 is always present");
    let factory = OperatorFactory::from_raw_pieces(
        grid,
        model,
        hs_raw,
        provenance,
        raws.next(),
        opts.gain_loss_tol,
    );
    if factory.is_err() {
        // the finishing guard rejected the assembly; junk stored this call
        // must not masquerade as a warm cache
        for path in fresh {
            let _ = fs::remove_file(path);
        }
    }
    Ok((factory?, outcome))
}

/// Verify cached pieces against a fresh assembly: 8 random rows of the
/// kernel matrix (and their ν entries) must agree to 1e−12 relative to the
/// matrix scale. Rows are drawn from a generator seeded by the cache keys,
/// so repeated verifications of one entry are reproducible.
///
/// The finishing projection is global, so rows cannot be recomputed in
/// isolation — verification re-assembles the piece and costs a build.
pub fn verify(
    dir: &Path,
    grid: &AxisymGrid,
    model: &CollisionModel,
    opts: &FactoryOptions,
) -> Result<()> {
    let gh = grid_hash(grid);
    let mh = model_hash(model, opts);
    let n = grid.n();
    for &slot in &needed_slots(model) {
        let path = piece_path(dir, gh, mh, slot);
        let Some(cached) = load_raw(&path, gh, mh, n)? else {
            return Err(Error::Cache(format!(
                "{}: no cache entry to verify",
                path.display()
            )));
        };
        let fresh = assemble_slot(grid, opts, slot);
        let scale = fresh.ls.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(gh ^ mh ^ slot as u64);
        for _ in 0..8 {
            let i = rng.gen_range(0..n);
            let dnu = (cached.nu[i] - fresh.nu[i]).abs();
            let drow = cached.ls[i * n..(i + 1) * n]
                .iter()
                .zip(&fresh.ls[i * n..(i + 1) * n])
                .fold(0.0_f64, |m, (&a, &b)| m.max((a - b).abs()));
            if dnu > 1e-12 * scale || drow > 1e-12 * scale {
                return Err(Error::Cache(format!(
                    "{}: row {i} deviates from a fresh assembly by {:.3e} \
                     (tolerance 1e-12 of scale {scale:.3e})",
                    path.display(),
                    drow.max(dnu)
                )));
            }
        }
    }
    Ok(())
}

/// Remove the cache entries for one (grid, model, options) key. Returns how
/// many files were deleted.
pub fn purge(
    dir: &Path,
    grid: &AxisymGrid,
    model: &CollisionModel,
    opts: &FactoryOptions,
) -> Result<usize> {
    let gh = grid_hash(grid);
    let mh = model_hash(model, opts);
    let mut removed = 0;
    for slot in 0..2 {
        let path = piece_path(dir, gh, mh, slot);
        match fs::remove_file(&path) {
            Ok(()) => removed += 1,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(removed)
}
