//! Whole-sketch inference over an overlapping patch grid.
//!
//! Non-empty windows form a graph (4-neighbors whose shared overlap band
//! holds ink). Each connected component is traversed breadth first from its
//! root; every window is translated as a hybrid of the pixels its
//! predecessors already committed and the plain sketch. Committed pixels are
//! never rewritten.

use crate::error::{Error, Result};
use crate::hybrid::{mask_from_committed, InferenceMask};
use crate::image::{background_value, dilate, erode, GrayImage, INK_THRESHOLD};
use crate::nets::Translator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

/// Grid cell as `(row, col)`.
pub type Cell = (usize, usize);

/// Overlapping windows laid over a padded copy of the sketch.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub overlap: usize,
    pub rows: usize,
    pub cols: usize,
    /// Size of the unpadded sketch.
    pub width: usize,
    pub height: usize,
    pub background: f64,
    /// Sketch extended right and down with `background`.
    pub canvas: GrayImage,
}

impl PatchGrid {
    pub fn step(&self) -> usize {
        self.patch_size - self.overlap
    }

    /// Top-left corner `(x, y)` of a cell's window in canvas coordinates.
    pub fn origin(&self, (i, j): Cell) -> (usize, usize) {
        (self.step() * j, self.step() * i)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| (i, j)))
    }

    pub fn window(&self, cell: Cell) -> GrayImage {
        let (x, y) = self.origin(cell);
        self.canvas.crop(
            x as isize,
            y as isize,
            self.patch_size,
            self.patch_size,
            self.background,
        )
    }
}

/// Grid with `ceil(h / (p − o))` rows and `ceil(w / (p − o))` columns.
pub fn build_grid(sketch: &GrayImage, p: usize, o: usize) -> Result<PatchGrid> {
    if p == 0 || o >= p {
        return Err(Error::Parameter(format!(
            "overlap {o} must be smaller than patch size {p}"
        )));
    }
    let (w, h) = (sketch.width(), sketch.height());
    if w == 0 || h == 0 {
        return Err(Error::EmptySketch("sketch has no pixels".into()));
    }
    let step = p - o;
    let (rows, cols) = (h.div_ceil(step), w.div_ceil(step));
    let background = background_value(sketch);
    let canvas = sketch.crop(
        0,
        0,
        (cols - 1) * step + p,
        (rows - 1) * step + p,
        background,
    );
    Ok(PatchGrid {
        patch_size: p,
        overlap: o,
        rows,
        cols,
        width: w,
        height: h,
        background,
        canvas,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RootPolicy {
    /// First non-empty cell of each component in raster order.
    #[default]
    Raster,
    /// Uniformly random cell of each component.
    Random(u64),
}

impl fmt::Display for RootPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RootPolicy::Raster => f.write_str("raster"),
            RootPolicy::Random(s) => write!(f, "random:{s}"),
        }
    }
}

impl FromStr for RootPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "raster" {
            return Ok(RootPolicy::Raster);
        }
        s.strip_prefix("random:")
            .and_then(|seed| seed.parse().ok())
            .map(RootPolicy::Random)
            .ok_or_else(|| {
                Error::Parameter(format!("root must be raster or random:SEED, got {s:?}"))
            })
    }
}

/// Order of translation inside each component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraversalOrder {
    #[default]
    Bfs,
    /// Diagnostic: raster order, ignoring adjacency.
    Raster,
}

impl fmt::Display for TraversalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraversalOrder::Bfs => "bfs",
            TraversalOrder::Raster => "raster",
        })
    }
}

impl FromStr for TraversalOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs" => Ok(TraversalOrder::Bfs),
            "raster" => Ok(TraversalOrder::Raster),
            _ => Err(Error::Parameter(format!(
                "order must be bfs or raster, got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Visit {
    pub cell: Cell,
    pub component: usize,
    /// Neighbor through which BFS reached this cell; `None` for roots.
    pub parent: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchGraph {
    pub rows: usize,
    pub cols: usize,
    nodes: Vec<bool>,
    /// Edge to the right neighbor, row-major.
    right: Vec<bool>,
    /// Edge to the neighbor below, row-major.
    down: Vec<bool>,
    /// BFS visits, component after component.
    pub order: Vec<Visit>,
}

impl PatchGraph {
    pub fn is_node(&self, (i, j): Cell) -> bool {
        self.nodes[i * self.cols + j]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|&&n| n).count()
    }

    pub fn component_count(&self) -> usize {
        self.order.iter().filter(|v| v.parent.is_none()).count()
    }

    pub fn roots(&self) -> Vec<Cell> {
        self.order
            .iter()
            .filter(|v| v.parent.is_none())
            .map(|v| v.cell)
            .collect()
    }

    /// Graph neighbors in expansion order: up, left, right, down.
    pub fn neighbors(&self, (i, j): Cell) -> Vec<Cell> {
        let c = self.cols;
        let mut out = Vec::with_capacity(4);
        if i > 0 && self.down[(i - 1) * c + j] {
            out.push((i - 1, j));
        }
        if j > 0 && self.right[i * c + j - 1] {
            out.push((i, j - 1));
        }
        if j + 1 < c && self.right[i * c + j] {
            out.push((i, j + 1));
        }
        if i + 1 < self.rows && self.down[i * c + j] {
            out.push((i + 1, j));
        }
        out
    }

    /// Visits under `order`; components keep their BFS roots and sequence.
    pub fn traversal(&self, order: TraversalOrder) -> Vec<Visit> {
        match order {
            TraversalOrder::Bfs => self.order.clone(),
            TraversalOrder::Raster => {
                let mut v = self.order.clone();
                v.sort_by_key(|v| (v.component, v.cell));
                v.iter_mut().for_each(|v| v.parent = None);
                v
            }
        }
    }
}

fn band_has_ink(img: &GrayImage, x0: usize, y0: usize, w: usize, h: usize, tau: f64) -> bool {
    (y0..y0 + h).any(|y| (x0..x0 + w).any(|x| img.get(x, y) < tau))
}

/// Builds nodes, edges and per-component BFS order.
pub fn build_graph(grid: &PatchGrid, tau_ink: f64, root: RootPolicy) -> Result<PatchGraph> {
    let (rows, cols, p, o) = (grid.rows, grid.cols, grid.patch_size, grid.overlap);
    let img = &grid.canvas;
    let mut nodes = vec![false; rows * cols];
    for cell in grid.cells() {
        let (x, y) = grid.origin(cell);
        nodes[cell.0 * cols + cell.1] = band_has_ink(img, x, y, p, p, tau_ink);
    }
    if !nodes.contains(&true) {
        return Err(Error::EmptySketch("no window contains ink".into()));
    }
    let mut right = vec![false; rows * cols];
    let mut down = vec![false; rows * cols];
    if o > 0 {
        for (i, j) in grid.cells() {
            let (x, y) = grid.origin((i, j));
            let k = i * cols + j;
            if j + 1 < cols && nodes[k] && nodes[k + 1] {
                right[k] = band_has_ink(img, x + p - o, y, o, p, tau_ink);
            }
            if i + 1 < rows && nodes[k] && nodes[k + cols] {
                down[k] = band_has_ink(img, x, y + p - o, p, o, tau_ink);
            }
        }
    }
    let mut graph = PatchGraph {
        rows,
        cols,
        nodes,
        right,
        down,
        order: Vec::new(),
    };

    // Components are numbered by their first cell in raster order.
    let mut component = vec![usize::MAX; rows * cols];
    let mut members: Vec<Vec<Cell>> = Vec::new();
    for start in grid.cells() {
        if !graph.is_node(start) || component[start.0 * cols + start.1] != usize::MAX {
            continue;
        }
        let id = members.len();
        let mut list = vec![start];
        component[start.0 * cols + start.1] = id;
        let mut k = 0;
        while k < list.len() {
            for n in graph.neighbors(list[k]) {
                if component[n.0 * cols + n.1] == usize::MAX {
                    component[n.0 * cols + n.1] = id;
                    list.push(n);
                }
            }
            k += 1;
        }
        list.sort_unstable();
        members.push(list);
    }

    let mut rng = match root {
        RootPolicy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        RootPolicy::Raster => None,
    };
    let mut seen = vec![false; rows * cols];
    for (id, list) in members.iter().enumerate() {
        let r = match rng.as_mut() {
            Some(rng) => list[rng.random_range(0..list.len())],
            None => list[0],
        };
        seen[r.0 * cols + r.1] = true;
        let mut queue = VecDeque::from([(r, None)]);
        while let Some((cell, parent)) = queue.pop_front() {
            graph.order.push(Visit {
                cell,
                component: id,
                parent,
            });
            for n in graph.neighbors(cell) {
                if !seen[n.0 * cols + n.1] {
                    seen[n.0 * cols + n.1] = true;
                    queue.push_back((n, Some(cell)));
                }
            }
        }
    }
    Ok(graph)
}

/// Stroke-weight adjustment applied before stylization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrokeOp {
    Erode(usize),
    Dilate(usize),
}

impl StrokeOp {
    pub fn apply(&self, sketch: &GrayImage) -> GrayImage {
        match *self {
            StrokeOp::Erode(r) => erode(sketch, r),
            StrokeOp::Dilate(r) => dilate(sketch, r),
        }
    }
}

impl fmt::Display for StrokeOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrokeOp::Erode(r) => write!(f, "erode:{r}"),
            StrokeOp::Dilate(r) => write!(f, "dilate:{r}"),
        }
    }
}

impl FromStr for StrokeOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("stroke op must be erode:R or dilate:R, got {s:?}"));
        let (op, r) = s.split_once(':').ok_or_else(bad)?;
        let r: usize = r.parse().map_err(|_| bad())?;
        match op {
            "erode" => Ok(StrokeOp::Erode(r)),
            "dilate" => Ok(StrokeOp::Dilate(r)),
            _ => Err(bad()),
        }
    }
}

/// Rectangle inside a window, with the exemplar position it is copied from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRegion {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub source_x: usize,
    pub source_y: usize,
}

impl fmt::Display for SeedRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}@{},{}",
            self.x, self.y, self.width, self.height, self.source_x, self.source_y
        )
    }
}

impl FromStr for SeedRegion {
    type Err = Error;

    /// `x,y,w,h[@sx,sy]`; the source defaults to `(x, y)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("seed region must be x,y,w,h[@sx,sy], got {s:?}"));
        let nums = |t: &str| -> Result<Vec<usize>> {
            t.split(',')
                .map(|v| v.trim().parse().map_err(|_| bad()))
                .collect()
        };
        let (rect, src) = match s.split_once('@') {
            Some((r, src)) => (nums(r)?, Some(nums(src)?)),
            None => (nums(s)?, None),
        };
        let [x, y, width, height] = rect[..] else {
            return Err(bad());
        };
        let (source_x, source_y) = match src.as_deref() {
            None => (x, y),
            Some(&[sx, sy]) => (sx, sy),
            Some(_) => return Err(bad()),
        };
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(SeedRegion {
            x,
            y,
            width,
            height,
            source_x,
            source_y,
        })
    }
}

/// Exemplar content pasted into every root window before translation.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationSeed {
    pub exemplar: GrayImage,
    pub region: SeedRegion,
}

/// Pastes the exemplar region into `hybrid`. The region must lie inside
/// the window, inside the exemplar, and over ink-free uncommitted pixels.
/// Returns the conditioned hybrid and the per-pixel pasted flags.
pub fn seed_orientation(
    hybrid: &GrayImage,
    committed: &[bool],
    seed: &OrientationSeed,
    tau_ink: f64,
) -> Result<(GrayImage, Vec<bool>)> {
    let (p, r) = (hybrid.width(), seed.region);
    if r.x + r.width > p || r.y + r.height > hybrid.height() {
        return Err(Error::Parameter(format!(
            "seed region {r} leaves the {p}x{} window",
            hybrid.height()
        )));
    }
    if r.source_x + r.width > seed.exemplar.width()
        || r.source_y + r.height > seed.exemplar.height()
    {
        return Err(Error::Parameter(format!(
            "seed region {r} leaves the exemplar"
        )));
    }
    let mut out = hybrid.clone();
    let mut pasted = vec![false; p * hybrid.height()];
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            if committed[y * p + x] || hybrid.get(x, y) < tau_ink {
                return Err(Error::Parameter(format!(
                    "seed region {r} overlaps ink at ({x}, {y})"
                )));
            }
            out.set(
                x,
                y,
                seed.exemplar
                    .get(r.source_x + x - r.x, r.source_y + y - r.y),
            );
            pasted[y * p + x] = true;
        }
    }
    Ok((out, pasted))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StylizeOptions {
    pub patch_size: usize,
    pub overlap: usize,
    pub root: RootPolicy,
    pub order: TraversalOrder,
    pub pre: Option<StrokeOp>,
    pub seed: Option<OrientationSeed>,
    pub ink_threshold: f64,
}

impl Default for StylizeOptions {
    fn default() -> Self {
        StylizeOptions {
            patch_size: 64,
            overlap: 16,
            root: RootPolicy::Raster,
            order: TraversalOrder::Bfs,
            pre: None,
            seed: None,
            ink_threshold: INK_THRESHOLD,
        }
    }
}

/// Output canvas of one component.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub image: GrayImage,
    pub committed: Vec<bool>,
}

/// One translated window.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub visit: Visit,
    pub conditioning: InferenceMask,
    /// Pixels of the window that were already committed.
    pub committed_before: usize,
    /// The component's canvas after this step.
    pub canvas: Canvas,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stylized {
    pub image: GrayImage,
    pub grid: PatchGrid,
    pub graph: PatchGraph,
}

/// Stylizes `sketch` window by window; see the module docs.
pub fn stylize(
    sketch: &GrayImage,
    translator: &dyn Translator,
    opts: &StylizeOptions,
) -> Result<Stylized> {
    run(sketch, translator, opts, None)
}

/// Like [`stylize`], also returning a canvas snapshot after every step.
pub fn stylize_traced(
    sketch: &GrayImage,
    translator: &dyn Translator,
    opts: &StylizeOptions,
) -> Result<(Stylized, Vec<Step>)> {
    let mut log = Vec::new();
    let s = run(sketch, translator, opts, Some(&mut log))?;
    Ok((s, log))
}

/// Translates every window on its own with no overlap and no
/// conditioning beyond the plain sketch.
pub fn stylize_independent(
    sketch: &GrayImage,
    translator: &dyn Translator,
    p: usize,
) -> Result<GrayImage> {
    let opts = StylizeOptions {
        patch_size: p,
        overlap: 0,
        ..StylizeOptions::default()
    };
    Ok(stylize(sketch, translator, &opts)?.image)
}

fn run(
    sketch: &GrayImage,
    translator: &dyn Translator,
    opts: &StylizeOptions,
    mut log: Option<&mut Vec<Step>>,
) -> Result<Stylized> {
    let p = opts.patch_size;
    let m = translator.side_multiple();
    if !p.is_multiple_of(m) {
        return Err(Error::Dimension(format!(
            "patch size {p} is not a multiple of {m}"
        )));
    }
    let sketch = match opts.pre {
        Some(op) => op.apply(sketch),
        None => sketch.clone(),
    };
    let grid = build_grid(&sketch, p, opts.overlap)?;
    let graph = build_graph(&grid, opts.ink_threshold, opts.root)?;
    let (cw, ch) = (grid.canvas.width(), grid.canvas.height());

    // Each component owns a canvas, so components never condition on each
    // other and the result does not depend on their scheduling.
    let mut canvases: Vec<Canvas> = Vec::new();
    for visit in graph.traversal(opts.order) {
        if visit.component == canvases.len() {
            canvases.push(Canvas {
                image: grid.canvas.clone(),
                committed: vec![false; cw * ch],
            });
        }
        let canvas = &mut canvases[visit.component];
        let (ox, oy) = grid.origin(visit.cell);
        let mut flags = vec![false; p * p];
        let mut hybrid = grid.window(visit.cell);
        for y in 0..p {
            for x in 0..p {
                let k = (oy + y) * cw + ox + x;
                if canvas.committed[k] {
                    flags[y * p + x] = true;
                    hybrid.set(x, y, canvas.image.pixels()[k]);
                }
            }
        }
        let conditioning = mask_from_committed(&flags, p)?;
        let committed_before = flags.iter().filter(|&&c| c).count();
        if conditioning != InferenceMask::Full {
            let is_root = visit.parent.is_none()
                || opts.order == TraversalOrder::Raster && committed_before == 0;
            let (input, pasted) = match (&opts.seed, is_root && committed_before == 0) {
                (Some(seed), true) => seed_orientation(&hybrid, &flags, seed, opts.ink_threshold)?,
                _ => (hybrid, vec![false; p * p]),
            };
            let out = translator.translate(&input)?;
            if (out.width(), out.height()) != (p, p) {
                return Err(Error::Dimension(format!(
                    "translator returned {}x{} for a {p}x{p} window",
                    out.width(),
                    out.height()
                )));
            }
            for y in 0..p {
                for x in 0..p {
                    let k = (oy + y) * cw + ox + x;
                    if !canvas.committed[k] && !pasted[y * p + x] {
                        canvas.image.set(ox + x, oy + y, out.get(x, y));
                        canvas.committed[k] = true;
                    }
                }
            }
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(Step {
                visit,
                conditioning,
                committed_before,
                canvas: canvas.clone(),
            });
        }
    }

    // Earliest component wins; pixels no window committed keep the
    // (ink-free) padded sketch.
    let mut out = grid
        .canvas
        .crop(0, 0, grid.width, grid.height, grid.background);
    for y in 0..grid.height {
        for x in 0..grid.width {
            if let Some(c) = canvases.iter().find(|c| c.committed[y * cw + x]) {
                out.set(x, y, c.image.pixels()[y * cw + x]);
            }
        }
    }
    Ok(Stylized {
        image: out,
        grid,
        graph,
    })
}

/// Boundary positions of a grid along one axis: each window edge strictly
/// inside `(0, n)`.
pub fn seam_lines(n: usize, p: usize, o: usize) -> Result<Vec<usize>> {
    if p == 0 || o >= p {
        return Err(Error::Parameter(format!(
            "overlap {o} must be smaller than patch size {p}"
        )));
    }
    let step = p - o;
    let mut v: Vec<usize> = (0..n.div_ceil(step))
        .flat_map(|i| [i * step, i * step + p])
        .filter(|&x| x > 0 && x < n)
        .collect();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

/// Mean absolute difference between the pixel rows or columns on either
/// side of every window boundary, averaged over boundaries touching ink.
/// Zero when no boundary touches ink.
pub fn seam_metric(image: &GrayImage, p: usize, o: usize) -> Result<f64> {
    let (w, h) = (image.width(), image.height());
    let mut lines = Vec::new();
    for x in seam_lines(w, p, o)? {
        let pairs: Vec<(f64, f64)> = (0..h)
            .map(|y| (image.get(x - 1, y), image.get(x, y)))
            .collect();
        lines.push(pairs);
    }
    for y in seam_lines(h, p, o)? {
        let pairs: Vec<(f64, f64)> = (0..w)
            .map(|x| (image.get(x, y - 1), image.get(x, y)))
            .collect();
        lines.push(pairs);
    }
    let scores: Vec<f64> = lines
        .iter()
        .filter(|l| {
            l.iter()
                .any(|&(a, b)| a < INK_THRESHOLD || b < INK_THRESHOLD)
        })
        .map(|l| l.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / l.len() as f64)
        .collect();
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
