//! Paired patch datasets mined from aligned plain/styled exemplars.

use crate::error::{Error, Result};
use crate::image::{rotate, GrayImage, BACKGROUND, INK_THRESHOLD};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// An aligned pair of `p × p` patches cut from the same place of a rotated
/// exemplar pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub plain: GrayImage,
    pub styled: GrayImage,
    pub exemplar: usize,
    /// Top-left corner in the rotated exemplar.
    pub origin: (usize, usize),
    pub rotation: f64,
}

/// True iff no pixel is darker than `threshold`.
pub fn is_empty(patch: &GrayImage, threshold: f64) -> bool {
    patch.pixels().iter().all(|&v| v >= threshold)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiningParams {
    pub patch_size: usize,
    /// Rotation increment in whole degrees.
    pub rotation_step: u32,
    /// Extraction step in pixels, both axes.
    pub stride: usize,
    pub ink_threshold: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams {
            patch_size: 64,
            rotation_step: 8,
            stride: 8,
            ink_threshold: INK_THRESHOLD,
        }
    }
}

impl MiningParams {
    /// Angles `k · d` for `k = 0, 1, ...` below 360.
    pub fn rotations(&self) -> Vec<f64> {
        let d = self.rotation_step.max(1);
        (0..)
            .map(|k| k * d)
            .take_while(|&a| a < 360)
            .map(f64::from)
            .collect()
    }
}

/// Number of stride-spaced windows of size `p` that fit in `n` pixels.
pub fn window_count(n: usize, p: usize, stride: usize) -> usize {
    if p > n || stride == 0 {
        0
    } else {
        (n - p) / stride + 1
    }
}

/// Mines one aligned exemplar pair, tagging patches with `exemplar`.
///
/// Both exemplars get every rotation, then windows are cut every `stride`
/// pixels. Pairs whose plain patch is empty are dropped. Output order is
/// (rotation, y, x).
pub fn mine(
    plain: &GrayImage,
    styled: &GrayImage,
    params: &MiningParams,
) -> Result<Vec<PatchPair>> {
    let pairs = mine_exemplar(plain, styled, params, 0)?;
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("every plain patch is empty".into()));
    }
    Ok(pairs)
}

/// Mines several exemplar pairs; ids follow slice order.
pub fn mine_all(
    exemplars: &[(GrayImage, GrayImage)],
    params: &MiningParams,
) -> Result<Vec<PatchPair>> {
    let mut out = Vec::new();
    for (id, (plain, styled)) in exemplars.iter().enumerate() {
        out.extend(mine_exemplar(plain, styled, params, id)?);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset("every plain patch is empty".into()));
    }
    Ok(out)
}

fn mine_exemplar(
    plain: &GrayImage,
    styled: &GrayImage,
    params: &MiningParams,
    id: usize,
) -> Result<Vec<PatchPair>> {
    if (plain.width(), plain.height()) != (styled.width(), styled.height()) {
        return Err(Error::Alignment(format!(
            "plain exemplar is {}x{} but styled is {}x{}",
            plain.width(),
            plain.height(),
            styled.width(),
            styled.height()
        )));
    }
    let p = params.patch_size;
    if p == 0 || p > plain.width().min(plain.height()) {
        return Err(Error::Parameter(format!(
            "patch size {p} must be in 1..={}",
            plain.width().min(plain.height())
        )));
    }
    if params.stride == 0 || params.rotation_step == 0 {
        return Err(Error::Parameter(
            "stride and rotation step must be positive".into(),
        ));
    }
    let mut out = Vec::new();
    for angle in params.rotations() {
        let (rp, rs) = (rotate(plain, angle), rotate(styled, angle));
        let nx = window_count(rp.width(), p, params.stride);
        let ny = window_count(rp.height(), p, params.stride);
        for b in 0..ny {
            for a in 0..nx {
                let (x, y) = (a * params.stride, b * params.stride);
                let pp = rp.crop(x as isize, y as isize, p, p, BACKGROUND);
                if is_empty(&pp, params.ink_threshold) {
                    continue;
                }
                out.push(PatchPair {
                    plain: pp,
                    styled: rs.crop(x as isize, y as isize, p, p, BACKGROUND),
                    exemplar: id,
                    origin: (x, y),
                    rotation: angle,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StyleKind {
    /// Diagonal bands along `x + y`.
    Stripes,
    /// Breaks along the horizontal axis.
    Dashes,
    /// Kept where both axes fall in the on-phase.
    Dots,
}

/// Deterministic modular style applied to the ink set of a plain sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StyleSpec {
    pub kind: StyleKind,
    pub period: usize,
    pub phase: usize,
    pub thickness: usize,
}

impl StyleSpec {
    pub fn stripes(period: usize, phase: usize, thickness: usize) -> Self {
        StyleSpec {
            kind: StyleKind::Stripes,
            period,
            phase,
            thickness,
        }
    }

    /// Whether ink at `(x, y)` survives.
    pub fn keeps(&self, x: usize, y: usize) -> bool {
        let on = |v: usize| (v + self.phase) % self.period < self.thickness;
        match self.kind {
            StyleKind::Stripes => on(x + y),
            StyleKind::Dashes => on(x),
            StyleKind::Dots => on(x) && on(y),
        }
    }
}

impl fmt::Display for StyleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            StyleKind::Stripes => "stripes",
            StyleKind::Dashes => "dashes",
            StyleKind::Dots => "dots",
        };
        write!(
            f,
            "{kind}:{}:{}:{}",
            self.period, self.phase, self.thickness
        )
    }
}

impl FromStr for StyleSpec {
    type Err = Error;

    /// `kind[:period[:phase[:thickness]]]`, defaults `6:0:3`.
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split(':');
        let kind = match it.next().unwrap_or("") {
            "stripes" => StyleKind::Stripes,
            "dashes" => StyleKind::Dashes,
            "dots" => StyleKind::Dots,
            other => return Err(Error::Parameter(format!("unknown style kind {other:?}"))),
        };
        let mut num = |default: usize| -> Result<usize> {
            match it.next() {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Parameter(format!("bad style number {v:?} in {s:?}"))),
            }
        };
        let (period, phase, thickness) = (num(6)?, num(0)?, num(3)?);
        if it.next().is_some() {
            return Err(Error::Parameter(format!("too many fields in style {s:?}")));
        }
        if period == 0 || thickness == 0 || thickness > period {
            return Err(Error::Parameter(format!(
                "style needs 0 < thickness <= period, got {thickness} and {period}"
            )));
        }
        Ok(StyleSpec {
            kind,
            period,
            phase,
            thickness,
        })
    }
}

/// Styled exemplar aligned with `plain`: ink the style drops becomes
/// background, everything else is copied.
pub fn synth_style(plain: &GrayImage, style: &StyleSpec) -> GrayImage {
    let mut out = plain.clone();
    for y in 0..plain.height() {
        for x in 0..plain.width() {
            if plain.is_ink(x, y) && !style.keeps(x, y) {
                out.set(x, y, BACKGROUND);
            }
        }
    }
    out
}

/// Reproducibility record stored next to a mined dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub params: MiningParams,
    pub exemplars: Vec<String>,
    pub pair_count: usize,
}

/// A mined dataset with its manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub pairs: Vec<PatchPair>,
}

impl Dataset {
    pub fn new(params: MiningParams, exemplars: Vec<String>, pairs: Vec<PatchPair>) -> Self {
        Dataset {
            manifest: DatasetManifest {
                params,
                exemplars,
                pair_count: pairs.len(),
            },
            pairs,
        }
    }

    /// Writes `manifest.txt` and `pairs/NNNNNN.{plain,styled}.pgm`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let pairs_dir = dir.join("pairs");
        std::fs::create_dir_all(&pairs_dir).map_err(|e| Error::io(&pairs_dir, e))?;
        let m = &self.manifest;
        let mut text = format!(
            "patch_size={}\nrotation_step={}\nstride={}\nink_threshold={}\npair_count={}\n",
            m.params.patch_size,
            m.params.rotation_step,
            m.params.stride,
            m.params.ink_threshold,
            m.pair_count
        );
        for e in &m.exemplars {
            text.push_str(&format!("exemplar={e}\n"));
        }
        for (i, pair) in self.pairs.iter().enumerate() {
            text.push_str(&format!(
                "pair={i:06},{},{},{},{}\n",
                pair.exemplar, pair.rotation, pair.origin.0, pair.origin.1
            ));
            pair.plain
                .save(pairs_dir.join(format!("{i:06}.plain.pgm")))?;
            pair.styled
                .save(pairs_dir.join(format!("{i:06}.styled.pgm")))?;
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut params = MiningParams::default();
        let mut exemplars = Vec::new();
        let mut pair_count = None;
        let mut meta = Vec::new();
        for (key, value) in crate::config::parse_kv(&text)? {
            let bad = || Error::Format(format!("manifest: bad value for {key}: {value:?}"));
            match key.as_str() {
                "patch_size" => params.patch_size = value.parse().map_err(|_| bad())?,
                "rotation_step" => params.rotation_step = value.parse().map_err(|_| bad())?,
                "stride" => params.stride = value.parse().map_err(|_| bad())?,
                "ink_threshold" => params.ink_threshold = value.parse().map_err(|_| bad())?,
                "pair_count" => pair_count = Some(value.parse::<usize>().map_err(|_| bad())?),
                "exemplar" => exemplars.push(value),
                "pair" => meta.push(value),
                _ => return Err(Error::Format(format!("manifest: unknown key {key:?}"))),
            }
        }
        let pair_count =
            pair_count.ok_or_else(|| Error::Format("manifest: missing pair_count".into()))?;
        if meta.len() != pair_count {
            return Err(Error::Format(format!(
                "manifest: pair_count {pair_count} but {} pair records",
                meta.len()
            )));
        }
        let mut pairs = Vec::with_capacity(pair_count);
        for (i, m) in meta.iter().enumerate() {
            let f: Vec<&str> = m.split(',').collect();
            let bad = || Error::Format(format!("manifest: bad pair record {m:?}"));
            if f.len() != 5 || f[0] != format!("{i:06}") {
                return Err(bad());
            }
            let plain = GrayImage::load(dir.join(format!("pairs/{i:06}.plain.pgm")))?;
            let styled = GrayImage::load(dir.join(format!("pairs/{i:06}.styled.pgm")))?;
            let p = params.patch_size;
            if (
                plain.width(),
                plain.height(),
                styled.width(),
                styled.height(),
            ) != (p, p, p, p)
            {
                return Err(Error::Format(format!("pair {i:06} is not {p}x{p}")));
            }
            pairs.push(PatchPair {
                plain,
                styled,
                exemplar: f[1].parse().map_err(|_| bad())?,
                rotation: f[2].parse().map_err(|_| bad())?,
                origin: (
                    f[3].parse().map_err(|_| bad())?,
                    f[4].parse().map_err(|_| bad())?,
                ),
            });
        }
        let pairs_dir = dir.join("pairs");
        let on_disk = std::fs::read_dir(&pairs_dir)
            .map_err(|e| Error::io(&pairs_dir, e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".plain.pgm"))
            .count();
        if on_disk != pair_count {
            return Err(Error::Format(format!(
                "manifest lists {pair_count} pairs but {on_disk} are on disk"
            )));
        }
        Ok(Dataset {
            manifest: DatasetManifest {
                params,
                exemplars,
                pair_count,
            },
            pairs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch;

    #[test]
    fn emptiness_threshold() {
        assert!(is_empty(&GrayImage::filled(4, 4, 1.0), 0.5));
        let mut one = GrayImage::filled(4, 4, 1.0);
        one.set(2, 1, 0.0);
        assert!(!is_empty(&one, 0.5));
        assert!(!is_empty(&GrayImage::filled(4, 4, 0.49), 0.5));
        assert!(is_empty(&GrayImage::filled(4, 4, 0.5), 0.5));
    }

    #[test]
    fn rotation_step_eight_gives_45_copies() {
        let p = MiningParams {
            rotation_step: 8,
            ..Default::default()
        };
        let r = p.rotations();
        assert_eq!(r.len(), 45);
        assert_eq!(r[44], 352.0);
    }

    #[test]
    fn single_window_for_patch_sized_exemplar() {
        assert_eq!(window_count(64, 64, 8), 1);
        assert_eq!(window_count(80, 64, 8), 3);
        assert_eq!(window_count(63, 64, 8), 0);
        let plain = sketch::draw(64, 64, 3);
        let styled = synth_style(&plain, &StyleSpec::stripes(6, 0, 3));
        let params = MiningParams {
            patch_size: 64,
            rotation_step: 360,
            stride: 8,
            ..Default::default()
        };
        let pairs = mine(&plain, &styled, &params).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].origin, (0, 0));
        assert_eq!(pairs[0].plain, plain);
        assert_eq!(pairs[0].styled, styled);
    }

    #[test]
    fn mining_errors() {
        let blank = GrayImage::filled(40, 40, 1.0);
        let params = MiningParams {
            patch_size: 16,
            ..Default::default()
        };
        assert!(matches!(
            mine(&blank, &blank, &params),
            Err(Error::EmptyDataset(_))
        ));
        let other = GrayImage::filled(40, 41, 1.0);
        assert!(matches!(
            mine(&blank, &other, &params),
            Err(Error::Alignment(_))
        ));
        let big = MiningParams {
            patch_size: 41,
            ..Default::default()
        };
        assert!(matches!(
            mine(&blank, &blank, &big),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn mining_is_ordered_deterministic_and_non_empty() {
        let plain = sketch::draw(72, 60, 9);
        let styled = synth_style(&plain, &StyleSpec::stripes(6, 1, 3));
        let params = MiningParams {
            patch_size: 32,
            rotation_step: 60,
            stride: 8,
            ..Default::default()
        };
        let a = mine(&plain, &styled, &params).unwrap();
        let b = mine(&plain, &styled, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| !is_empty(&p.plain, INK_THRESHOLD)));
        let keys: Vec<_> = a
            .iter()
            .map(|p| (p.rotation as u32, p.origin.1, p.origin.0))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(a.iter().any(|p| p.rotation > 0.0));
    }

    #[test]
    fn full_thickness_style_keeps_alignment() {
        let plain = sketch::draw(48, 48, 4);
        let styled = synth_style(&plain, &StyleSpec::stripes(5, 2, 5));
        assert_eq!(styled, plain);
        let params = MiningParams {
            patch_size: 24,
            rotation_step: 45,
            stride: 8,
            ..Default::default()
        };
        for pair in mine(&plain, &styled, &params).unwrap() {
            assert_eq!(pair.plain, pair.styled);
        }
    }

    #[test]
    fn stripes_rule_on_a_full_row() {
        let row = GrayImage::filled(12, 1, 0.0);
        let out = synth_style(&row, &StyleSpec::stripes(6, 0, 3));
        let ink: Vec<bool> = (0..12).map(|x| out.is_ink(x, 0)).collect();
        let pattern = [true, true, true, false, false, false];
        assert_eq!(ink, [pattern, pattern].concat());
        let blank = GrayImage::filled(8, 8, 1.0);
        assert_eq!(synth_style(&blank, &StyleSpec::stripes(6, 0, 3)), blank);
    }

    #[test]
    fn style_spec_parsing() {
        let s: StyleSpec = "dots:4:1:2".parse().unwrap();
        assert_eq!(
            s,
            StyleSpec {
                kind: StyleKind::Dots,
                period: 4,
                phase: 1,
                thickness: 2
            }
        );
        assert_eq!(s.to_string().parse::<StyleSpec>().unwrap(), s);
        assert_eq!(
            "stripes".parse::<StyleSpec>().unwrap(),
            StyleSpec::stripes(6, 0, 3)
        );
        assert!("waves".parse::<StyleSpec>().is_err());
        assert!("dashes:3:0:4".parse::<StyleSpec>().is_err());
    }

    #[test]
    fn dataset_directory_round_trip() {
        let plain = sketch::draw(48, 48, 5);
        let styled = synth_style(&plain, &StyleSpec::stripes(6, 0, 3));
        let params = MiningParams {
            patch_size: 24,
            rotation_step: 90,
            stride: 12,
            ..Default::default()
        };
        let pairs: Vec<PatchPair> = mine(&plain, &styled, &params)
            .unwrap()
            .into_iter()
            .map(|mut p| {
                p.plain = p.plain.quantized();
                p.styled = p.styled.quantized();
                p
            })
            .collect();
        let ds = Dataset::new(params, vec!["a.png|b.png".into()], pairs);
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path()).unwrap();
        assert!(dir.path().join("pairs/000000.plain.pgm").exists());
        assert_eq!(Dataset::read(dir.path()).unwrap(), ds);
        std::fs::remove_file(dir.path().join("pairs/000000.plain.pgm")).unwrap();
        assert!(Dataset::read(dir.path()).is_err());
    }
}
