//! Output staging and artifact formats.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use magorb_core::action::ActionReport;
use magorb_core::dynamics::{ClosureResidual, Orbit};
use magorb_core::io::num;
use magorb_core::{SurfaceModel, TimedLoop, Vec2};

/// Files are written into a hidden sibling of the target directory and moved
/// into place by [`Staging::commit`]. Dropped without a commit, the staging
/// directory is removed.
pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path) -> io::Result<Self> {
        let name = target
            .file_name()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no final component"))?
            .to_string_lossy()
            .into_owned();
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir)?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&self, rel: &str, contents: &str) -> io::Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(p, contents)
    }

    /// Replaces the target directory with the staged one.
    pub fn commit(mut self) -> io::Result<()> {
        if self.target.exists() {
            let old = self.dir.with_extension("old");
            fs::rename(&self.target, &old)?;
            fs::rename(&self.dir, &self.target)?;
            fs::remove_dir_all(&old)?;
        } else {
            fs::rename(&self.dir, &self.target)?;
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

pub fn point(p: &Vec2) -> Value {
    json!([num(p.x), num(p.y)])
}

pub fn closure(c: &ClosureResidual) -> Value {
    json!({
        "position_gap": num(c.position_gap),
        "velocity_gap": num(c.velocity_gap),
        "energy_error": num(c.energy_error),
        "energy_drift": num(c.energy_drift),
    })
}

pub fn action(a: &ActionReport) -> Value {
    json!({
        "kinetic": num(a.kinetic),
        "kT": num(a.period_term),
        "flux": num(a.flux),
        "total": num(a.total),
        "grad_loop_norm": num(a.grad_loop_norm),
        "grad_T": num(a.grad_t),
        "class": a.class,
    })
}

pub fn loop_ref(file: &str, x: &TimedLoop) -> Value {
    json!({
        "file": file,
        "N": x.len(),
        "T": num(x.period()),
        "class": x.class(),
    })
}

fn bounds(sets: &[&[Vec2]]) -> Option<(Vec2, Vec2)> {
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    for p in sets.iter().flat_map(|s| s.iter()).filter(|p| p.x.is_finite() && p.y.is_finite()) {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    lo.x.is_finite().then_some((lo, hi))
}

fn polyline(pts: &[Vec2], closed: bool, style: &str, map: impl Fn(&Vec2) -> (f64, f64)) -> String {
    let mut d = String::new();
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = map(p);
        d.push_str(&format!("{}{x:.3},{y:.3}", if i == 0 { "M" } else { " L" }));
    }
    if closed {
        d.push_str(" Z");
    }
    format!("  <path d=\"{d}\" {style}/>\n")
}

/// Loop trace with the integrated orbit on top, in cover coordinates.
pub fn orbit_svg(model: &SurfaceModel, x: &TimedLoop, orbit: &Orbit) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 20.0;
    let traj: Vec<Vec2> = orbit.samples.iter().map(|s| s.state.q).collect();
    let (lo, hi) = bounds(&[x.points(), &traj]).unwrap_or((Vec2::zeros(), Vec2::repeat(1.0)));
    let span = (hi - lo).max().max(1e-9);
    let scale = (SIZE - 2.0 * PAD) / span;
    let map = |p: &Vec2| (PAD + (p.x - lo.x) * scale, SIZE - PAD - (p.y - lo.y) * scale);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n"
    );
    s.push_str(&format!(
        "  <title>{} B={} loop N={} T={:.6}</title>\n",
        model.kind(),
        model.field_strength(),
        x.len(),
        x.period()
    ));
    s.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&polyline(
        x.points(),
        x.class().is_trivial(),
        "fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"",
        map,
    ));
    s.push_str(&polyline(
        &traj,
        false,
        "fill=\"none\" stroke=\"#d62728\" stroke-width=\"1\" stroke-dasharray=\"4 3\"",
        map,
    ));
    s.push_str("</svg>\n");
    s
}
