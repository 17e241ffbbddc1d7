//! Julia-set rasterization by corner-orbit boundary detection, with PGM and CSV output.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolicity::{attracting_cycles, PROBE_STEPS};
use crate::maps::MapSpec;
use crate::sphere::SpherePoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub center: Complex64,
    pub width: f64,
    pub height: f64,
}

impl Viewport {
    pub fn new(center: Complex64, width: f64, height: f64) -> Self {
        Viewport { center, width, height }
    }

    /// Axis-aligned box `[re0, re1] × [im0, im1]`.
    pub fn from_bounds(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Viewport { center: Complex64::new(0.5 * (re0 + re1), 0.5 * (im0 + im1)), width: re1 - re0, height: im1 - im0 }
    }

    /// Corner `(i, j)` of a `w × h` pixel grid; row 0 is the top edge.
    pub fn corner(&self, i: usize, j: usize, w: usize, h: usize) -> Complex64 {
        let x = self.center.re - 0.5 * self.width + self.width * i as f64 / w as f64;
        let y = self.center.im + 0.5 * self.height - self.height * j as f64 / h as f64;
        Complex64::new(x, y)
    }

    pub fn pixel_center(&self, col: usize, row: usize, w: usize, h: usize) -> Complex64 {
        let x = self.center.re - 0.5 * self.width + self.width * (col as f64 + 0.5) / w as f64;
        let y = self.center.im + 0.5 * self.height - self.height * (row as f64 + 0.5) / h as f64;
        Complex64::new(x, y)
    }

    /// Pixel containing `z`, if inside.
    pub fn pixel_of(&self, z: Complex64, w: usize, h: usize) -> Option<(usize, usize)> {
        let fx = (z.re - (self.center.re - 0.5 * self.width)) / self.width * w as f64;
        let fy = ((self.center.im + 0.5 * self.height) - z.im) / self.height * h as f64;
        if fx < 0.0 || fy < 0.0 || fx >= w as f64 || fy >= h as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }
}

/// Forward-orbit probe for each pixel corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub max_steps: usize,
    pub escape_radius: f64,
    /// Corner orbits further apart than this spherical distance mark the cell; `None` leaves
    /// marking to fate disagreement alone.
    pub spread: Option<f64>,
    /// Spherical distance at which a corner counts as captured by an attracting cycle.
    pub capture: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe { max_steps: PROBE_STEPS, escape_radius: 1e6, spread: Some(0.3), capture: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub viewport: Viewport,
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the top.
    pub occupied: Vec<bool>,
    /// Step at which each cell was resolved (`max_steps` if never).
    pub counts: Vec<u32>,
    pub max_steps: usize,
}

impl RasterGrid {
    /// A raster from an explicit occupancy bitmap (counts zeroed).
    pub fn from_occupancy(viewport: Viewport, width: usize, height: usize, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != width * height {
            return Err(Error::InvalidArgument(format!("bitmap has {} cells, expected {}", occupied.len(), width * height)));
        }
        Ok(RasterGrid { viewport, width, height, occupied, counts: vec![0; width * height], max_steps: 0 })
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.occupied[row * self.width + col]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|b| **b).count()
    }

    pub fn pixel_size(&self) -> f64 {
        self.viewport.width / self.width as f64
    }

    /// Binary greymap: marked cells black, others brighter the sooner they resolved.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let steps = self.max_steps.max(1) as f64;
        out.extend(self.occupied.iter().zip(&self.counts).map(|(occ, c)| {
            if *occ {
                0
            } else {
                (255.0 - 200.0 * (*c as f64 / steps).min(1.0)).round() as u8
            }
        }));
        out
    }

    /// `col,row` for each marked cell in row-major order.
    pub fn occupancy_csv(&self) -> String {
        let mut s = String::from("col,row\n");
        for row in 0..self.height {
            for col in 0..self.width {
                if self.is_occupied(col, row) {
                    let _ = writeln!(s, "{col},{row}");
                }
            }
        }
        s
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn write_occupancy_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.occupancy_csv())?;
        Ok(())
    }
}

/// Width, height and pixel bytes of a binary greymap.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = || Error::InvalidArgument("not a P5 greymap with maxval 255".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    let (w, h) = (fields[1].parse::<usize>().map_err(|_| bad())?, fields[2].parse::<usize>().map_err(|_| bad())?);
    if fields[0] != "P5" || fields[3] != "255" || bytes.len() < pos + w * h {
        return Err(bad());
    }
    Ok((w, h, bytes[pos..pos + w * h].to_vec()))
}

/// Occupancy bitmap from `col,row` lines.
pub fn read_occupancy_csv(text: &str, width: usize, height: usize) -> Result<Vec<bool>> {
    let mut occ = vec![false; width * height];
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || Error::InvalidArgument(format!("occupancy line {}: `{line}`", n + 1));
        let (c, r) = line.split_once(',').ok_or_else(bad)?;
        let (c, r): (usize, usize) = (c.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?);
        if c >= width || r >= height {
            return Err(bad());
        }
        occ[r * width + c] = true;
    }
    Ok(occ)
}

// corner fate classes: 0 alive, 1 escaped or hit a pole, 2+i captured by cycle i
const ALIVE: u32 = 0;
const ESCAPED: u32 = 1;

#[derive(Clone, Copy)]
enum Corner {
    Active(Complex64),
    Done(u32),
}

struct Classifier<'a> {
    map: &'a MapSpec,
    cycles: Vec<Vec<SpherePoint>>,
    infinity_class: u32,
    probe: Probe,
    spread: f64,
    sin_capture: f64,
}

fn sin_chord(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / ((1.0 + a.norm_sqr()).sqrt() * (1.0 + b.norm_sqr()).sqrt())
}

impl Classifier<'_> {
    fn apart(&self, a: Complex64, b: Complex64) -> bool {
        sin_chord(a, b).asin() > self.spread
    }

    fn captured(&self, z: Complex64) -> Option<u32> {
        for (i, c) in self.cycles.iter().enumerate() {
            for p in c {
                let hit = match p {
                    SpherePoint::Finite(w) => sin_chord(z, *w) < self.sin_capture,
                    SpherePoint::Infinity => 1.0 / (1.0 + z.norm_sqr()).sqrt() < self.sin_capture,
                };
                if hit {
                    return Some(2 + i as u32);
                }
            }
        }
        None
    }

    fn settle(&self, z: Complex64) -> Corner {
        if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > self.probe.escape_radius {
            return Corner::Done(self.infinity_class);
        }
        match self.captured(z) {
            Some(c) => Corner::Done(c),
            None => Corner::Active(z),
        }
    }

    fn advance(&self, c: Corner) -> Corner {
        match c {
            Corner::Done(_) => c,
            Corner::Active(z) => match self.map.eval(SpherePoint::Finite(z)) {
                Ok(SpherePoint::Finite(w)) => self.settle(w),
                _ => Corner::Done(self.infinity_class),
            },
        }
    }
}

/// Marks cells whose four corner orbits disagree in fate (escape or pole versus not, or different
/// attracting cycles) or drift further apart than `probe.spread` before being captured.
pub fn render_julia(map: &MapSpec, viewport: Viewport, resolution: (usize, usize), probe: Probe) -> Result<RasterGrid> {
    let (w, h) = resolution;
    if w < 64 || h < 64 {
        return Err(Error::InvalidArgument(format!("resolution {w}x{h} below 64x64")));
    }
    let cycles: Vec<Vec<SpherePoint>> =
        attracting_cycles(map, PROBE_STEPS).unwrap_or_default().into_iter().map(|c| c.points).collect();
    let infinity_class = cycles
        .iter()
        .position(|c| c.iter().any(|p| p.is_infinite()))
        .map(|i| 2 + i as u32)
        .unwrap_or(ESCAPED);
    let cls = Classifier {
        map,
        cycles,
        infinity_class,
        probe,
        spread: probe.spread.unwrap_or(f64::INFINITY),
        sin_capture: probe.capture.sin(),
    };
    let rows: Vec<(Vec<bool>, Vec<u32>)> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut top: Vec<Corner> = (0..=w).map(|i| cls.settle(viewport.corner(i, row, w, h))).collect();
            let mut bottom: Vec<Corner> = (0..=w).map(|i| cls.settle(viewport.corner(i, row + 1, w, h))).collect();
            let mut marked = vec![false; w];
            let mut resolved = vec![false; w];
            let mut counts = vec![probe.max_steps as u32; w];
            let mut open = w;
            for step in 0..=probe.max_steps {
                if step > 0 {
                    for i in 0..=w {
                        let needed = (i > 0 && !resolved[i - 1]) || (i < w && !resolved[i]);
                        if needed {
                            top[i] = cls.advance(top[i]);
                            bottom[i] = cls.advance(bottom[i]);
                        }
                    }
                }
                for c in 0..w {
                    if resolved[c] {
                        continue;
                    }
                    let corners = [top[c], top[c + 1], bottom[c], bottom[c + 1]];
                    let mut active = [Complex64::new(0.0, 0.0); 4];
                    let mut na = 0;
                    let mut classes = [ALIVE; 4];
                    let mut nd = 0;
                    for k in corners {
                        match k {
                            Corner::Active(z) => {
                                active[na] = z;
                                na += 1;
                            }
                            Corner::Done(cl) => {
                                classes[nd] = cl;
                                nd += 1;
                            }
                        }
                    }
                    let spread = (0..na).any(|a| (a + 1..na).any(|b| cls.apart(active[a], active[b])));
                    let verdict = if spread {
                        Some(true)
                    } else if nd == 4 {
                        Some(classes.iter().any(|cl| *cl != classes[0]))
                    } else if step == probe.max_steps {
                        // survivors count as alive
                        let first = if nd > 0 { classes[0] } else { ALIVE };
                        Some(classes[..nd].iter().any(|cl| *cl != first) || (nd > 0 && first != ALIVE))
                    } else {
                        None
                    };
                    if let Some(m) = verdict {
                        marked[c] = m;
                        resolved[c] = true;
                        counts[c] = step as u32;
                        open -= 1;
                    }
                }
                if open == 0 {
                    break;
                }
            }
            (marked, counts)
        })
        .collect();
    let mut occupied = Vec::with_capacity(w * h);
    let mut counts = Vec::with_capacity(w * h);
    for (m, c) in rows {
        occupied.extend(m);
        counts.extend(c);
    }
    Ok(RasterGrid { viewport, width: w, height: h, occupied, counts, max_steps: probe.max_steps })
}
