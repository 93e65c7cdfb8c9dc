//! Fine-grained grounding: genetic search over top-left-corner pixel
//! coordinates, maximizing physical feasibility plus relation scores.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast::{DiscretePoseSet, TopoRelationSet};
use crate::geometry::{Pose, Vec3};
use crate::relations::{score_view, PxBox, PxView, RelationKind, RelationLibrary};
use crate::scene::{Layout, SceneSpec, PLANE_H, PLANE_W};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingConfig {
    pub plane_w: u32,
    pub plane_h: u32,
    pub population: usize,
    pub generations: u32,
    pub mutation_ratio: f64,
    pub elite_frac: f64,
    pub gaussian_sigma_px: f64,
    pub rng_seed: u64,
    pub physical_weight: f64,
    pub semantic_weight: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            plane_w: PLANE_W,
            plane_h: PLANE_H,
            population: 2000,
            generations: 100,
            mutation_ratio: 0.3,
            elite_frac: 0.5,
            gaussian_sigma_px: 8.0,
            rng_seed: 0,
            physical_weight: 1.0,
            semantic_weight: 1.0,
        }
    }
}

impl GroundingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::InvalidConfig { detail });
        if self.population == 0 || self.population % 2 != 0 {
            return fail(format!("population {} must be even and positive", self.population));
        }
        if self.generations == 0 {
            return fail("generations must be at least 1".into());
        }
        if !(self.elite_frac > 0.0 && self.elite_frac < 1.0) {
            return fail(format!("elite_frac {} outside (0, 1)", self.elite_frac));
        }
        if !(0.0..=1.0).contains(&self.mutation_ratio) {
            return fail(format!("mutation_ratio {} outside [0, 1]", self.mutation_ratio));
        }
        if self.plane_w == 0 || self.plane_h == 0 {
            return fail("plane dimensions must be positive".into());
        }
        Ok(())
    }

    /// Maximum attainable fitness under these weights.
    pub fn full_score(&self) -> f64 {
        self.physical_weight + self.semantic_weight
    }
}

/// Stacking structure: child -> parent edges from z-axis relations, plus the
/// resting height (bottom face, absolute cm) of every object.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportGraph {
    pub parent: BTreeMap<String, String>,
    pub z_level: BTreeMap<String, f64>,
}

impl SupportGraph {
    pub fn is_ancestor<'a>(&'a self, ancestor: &str, mut node: &'a str) -> bool {
        while let Some(p) = self.parent.get(node) {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }

    /// Support depth: 0 on the surface, +1 per supporter underneath.
    pub fn depth(&self, name: &str) -> usize {
        let mut depth = 0;
        let mut node = name;
        while let Some(p) = self.parent.get(node) {
            depth += 1;
            node = p;
        }
        depth
    }
}

/// Derive stacking edges from the relation set: any relative relation with a
/// nonzero z rpc contributes an edge, and vertical alignment chains stack in
/// argument order (first argument at the bottom).
pub fn build_support_graph(
    relations: &TopoRelationSet,
    scene: &SceneSpec,
    lib: &RelationLibrary,
) -> Result<SupportGraph> {
    let mut graph = SupportGraph::default();
    let add_edge = |child: &str, parent: &str, graph: &mut SupportGraph| -> Result<()> {
        if scene.object(child).is_none() {
            return Err(Error::UnknownObject { name: child.into() });
        }
        if scene.object(parent).is_none() {
            return Err(Error::UnknownObject {
                name: parent.into(),
            });
        }
        match graph.parent.get(child) {
            Some(existing) if existing != parent => Err(Error::MultipleSupporters {
                name: child.to_string(),
            }),
            _ => {
                graph.parent.insert(child.to_string(), parent.to_string());
                Ok(())
            }
        }
    };

    for instance in &relations.relations {
        let def = lib.get(&instance.relation)?;
        match def.kind {
            RelationKind::Relative => {
                let rpc = def.rpc.expect("relative relations carry an rpc");
                if rpc[2] > 0 {
                    add_edge(&instance.args[0], &instance.args[1], &mut graph)?;
                } else if rpc[2] < 0 {
                    add_edge(&instance.args[1], &instance.args[0], &mut graph)?;
                }
            }
            RelationKind::Alignment
                if matches!(def.constraint.align_mode, crate::relations::AlignMode::CenterZ) =>
            {
                for pair in instance.args.windows(2) {
                    add_edge(&pair[1], &pair[0], &mut graph)?;
                }
            }
            _ => {}
        }
    }

    // cycle detection, walking up from every node
    for start in graph.parent.keys() {
        let mut seen = vec![start.clone()];
        let mut node = start.clone();
        while let Some(p) = graph.parent.get(&node) {
            if seen.contains(p) {
                seen.push(p.clone());
                return Err(Error::StackingCycle {
                    cycle: seen.join(" -> "),
                });
            }
            seen.push(p.clone());
            node = p.clone();
        }
    }

    // resting heights bottom-up
    fn level(
        name: &str,
        graph: &SupportGraph,
        scene: &SceneSpec,
        memo: &mut BTreeMap<String, f64>,
    ) -> f64 {
        if let Some(v) = memo.get(name) {
            return *v;
        }
        let value = match graph.parent.get(name) {
            Some(parent) => {
                let parent_level = level(parent, graph, scene, memo);
                parent_level + scene.object(parent).map(|o| o.size.z).unwrap_or(0.0)
            }
            None => scene.boundary.surface_z,
        };
        memo.insert(name.to_string(), value);
        value
    }
    let mut memo = BTreeMap::new();
    for obj in &scene.objects {
        let l = level(&obj.name, &graph, scene, &mut memo);
        graph.z_level.insert(obj.name.clone(), l);
    }
    Ok(graph)
}

/// One candidate layout: integer top-left corners in plane pixels, ordered as
/// `GenomeMeta::names`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genome {
    pub corners: Vec<(i32, i32)>,
}

impl Genome {
    fn content_hash(&self) -> u64 {
        // FNV-1a over the corner coordinates, for deterministic tie-breaking
        let mut hash: u64 = 0xcbf29ce484222325;
        for &(x, y) in &self.corners {
            for b in x.to_le_bytes().into_iter().chain(y.to_le_bytes()) {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x100000001b3);
            }
        }
        hash
    }
}

/// Shared immutable facts about the genomes of one grounding run.
#[derive(Clone, Debug)]
pub struct GenomeMeta {
    pub names: Vec<String>,
    pub sizes_px: Vec<(f64, f64)>,
    /// Inclusive maximum corner per object; minimum is (0, 0).
    pub bounds: Vec<(i32, i32)>,
    /// Vertical extents in z pixels (bottom, top), fixed by the support graph.
    pub z_ranges_px: Vec<(f64, f64)>,
    /// Unordered pairs exempt from collision (same support chain).
    pub chain_exempt: Vec<(usize, usize)>,
    /// Child -> supporter edges, copied from the support graph.
    pub parent_of: BTreeMap<String, String>,
    pub plane_w: u32,
    pub plane_h: u32,
}

impl GenomeMeta {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn view_of(&self, genome: &Genome) -> PxView {
        let mut boxes = BTreeMap::new();
        for (i, name) in self.names.iter().enumerate() {
            let (x, y) = genome.corners[i];
            let (w, h) = self.sizes_px[i];
            let (z0, z1) = self.z_ranges_px[i];
            boxes.insert(
                name.clone(),
                PxBox {
                    x0: x as f64,
                    y0: y as f64,
                    x1: x as f64 + w,
                    y1: y as f64 + h,
                    z0,
                    z1,
                },
            );
        }
        PxView {
            boxes,
            plane_w: self.plane_w as f64,
            plane_h: self.plane_h as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitnessBreakdown {
    pub collision_score: f64,
    pub boundary_score: f64,
    pub stability_score: f64,
    /// One score per surviving relation, in relation-set order.
    pub relation_scores: Vec<f64>,
    pub total: f64,
    pub is_full: bool,
}

impl FitnessBreakdown {
    pub fn physical(&self) -> f64 {
        (self.collision_score + self.boundary_score + self.stability_score) / 3.0
    }

    pub fn semantic(&self) -> f64 {
        if self.relation_scores.is_empty() {
            1.0
        } else {
            self.relation_scores.iter().sum::<f64>() / self.relation_scores.len() as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct Population {
    pub meta: Arc<GenomeMeta>,
    pub genomes: Vec<Genome>,
}

/// Build the shared genome metadata: pixel footprints, corner bounds, fixed
/// z extents, and collision exemptions for support chains.
fn build_meta(
    scene: &SceneSpec,
    support: &SupportGraph,
    cfg: &GroundingConfig,
) -> Result<GenomeMeta> {
    let map = scene.boundary.plane_map(cfg.plane_w, cfg.plane_h);
    let mut names: Vec<String> = scene.object_names();
    names.sort();
    let mut sizes_px = Vec::with_capacity(names.len());
    let mut bounds = Vec::with_capacity(names.len());
    let mut z_ranges = Vec::with_capacity(names.len());
    for name in &names {
        let obj = scene.object(name).expect("names come from the scene");
        let (w, h) = map.size_to_px(obj.size);
        let bx = cfg.plane_w as f64 - w;
        let by = cfg.plane_h as f64 - h;
        if bx < 0.0 {
            return Err(Error::ObjectTooLarge {
                name: name.clone(),
                needed_px: w,
                plane_px: cfg.plane_w,
            });
        }
        if by < 0.0 {
            return Err(Error::ObjectTooLarge {
                name: name.clone(),
                needed_px: h,
                plane_px: cfg.plane_h,
            });
        }
        sizes_px.push((w, h));
        bounds.push((bx.floor() as i32, by.floor() as i32));
        let z0 = (support.z_level.get(name).copied().unwrap_or(scene.boundary.surface_z)
            - scene.boundary.surface_z)
            * map.px_per_cm_x;
        let z1 = z0 + obj.size.z * map.px_per_cm_x;
        z_ranges.push((z0, z1));
    }
    let mut chain_exempt = Vec::new();
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            if support.is_ancestor(&names[i], &names[j]) || support.is_ancestor(&names[j], &names[i])
            {
                chain_exempt.push((i, j));
            }
        }
    }
    Ok(GenomeMeta {
        names,
        sizes_px,
        bounds,
        z_ranges_px: z_ranges,
        chain_exempt,
        parent_of: support.parent.clone(),
        plane_w: cfg.plane_w,
        plane_h: cfg.plane_h,
    })
}

/// Seed a population from the lattice: the lattice extent is affinely mapped
/// into the plane with a 5% margin, then every object gets uniform jitter of
/// +/- gaussian_sigma_px, clamped to its bounds. Deterministic under the
/// config seed.
pub fn init_population(
    coords: &DiscretePoseSet,
    scene: &SceneSpec,
    support: &SupportGraph,
    cfg: &GroundingConfig,
) -> Result<Population> {
    cfg.validate()?;
    scene.validate()?;
    let meta = Arc::new(build_meta(scene, support, cfg)?);
    for name in &meta.names {
        if !coords.poses.contains_key(name) {
            return Err(Error::UnknownObject { name: name.clone() });
        }
    }

    let (mut lx_min, mut lx_max) = (i64::MAX, i64::MIN);
    let (mut ly_min, mut ly_max) = (i64::MAX, i64::MIN);
    for name in &meta.names {
        let p = coords.poses[name];
        lx_min = lx_min.min(p[0]);
        lx_max = lx_max.max(p[0]);
        ly_min = ly_min.min(p[1]);
        ly_max = ly_max.max(p[1]);
    }

    let margin_x = 0.05 * cfg.plane_w as f64;
    let margin_y = 0.05 * cfg.plane_h as f64;
    let span_x = (cfg.plane_w as f64) - 2.0 * margin_x;
    let span_y = (cfg.plane_h as f64) - 2.0 * margin_y;

    let seed_center = |name: &str| -> (f64, f64) {
        let p = coords.poses[name];
        let cx = if lx_max == lx_min {
            cfg.plane_w as f64 / 2.0
        } else {
            margin_x + (p[0] - lx_min) as f64 / (lx_max - lx_min) as f64 * span_x
        };
        // lattice +y points away from the front edge, plane +y toward it
        let cy = if ly_max == ly_min {
            cfg.plane_h as f64 / 2.0
        } else {
            margin_y + (ly_max - p[1]) as f64 / (ly_max - ly_min) as f64 * span_y
        };
        (cx, cy)
    };

    let sigma = cfg.gaussian_sigma_px.round().max(0.0) as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut genomes = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let mut corners = Vec::with_capacity(meta.names.len());
        for (i, name) in meta.names.iter().enumerate() {
            let (cx, cy) = seed_center(name);
            let (w, h) = meta.sizes_px[i];
            let mut x = (cx - w / 2.0).round() as i32;
            let mut y = (cy - h / 2.0).round() as i32;
            if sigma > 0 {
                x += rng.gen_range(-sigma..=sigma);
                y += rng.gen_range(-sigma..=sigma);
            }
            corners.push((x.clamp(0, meta.bounds[i].0), y.clamp(0, meta.bounds[i].1)));
        }
        genomes.push(Genome { corners });
    }
    Ok(Population { meta, genomes })
}

/// Pure fitness of one genome: equally weighted physical components
/// (collision, boundary, stability) plus the mean relation score.
pub fn fitness(
    genome: &Genome,
    meta: &GenomeMeta,
    relations: &TopoRelationSet,
    lib: &RelationLibrary,
    cfg: &GroundingConfig,
) -> Result<FitnessBreakdown> {
    let n = meta.names.len();

    // collision: mean pairwise footprint-overlap ratio, chain pairs exempt
    let mut overlap_sum = 0.0;
    let mut pair_count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            if meta.chain_exempt.contains(&(i, j)) {
                continue;
            }
            pair_count += 1;
            let (xi, yi) = genome.corners[i];
            let (wi, hi) = meta.sizes_px[i];
            let (xj, yj) = genome.corners[j];
            let (wj, hj) = meta.sizes_px[j];
            let ox = ((xi as f64 + wi).min(xj as f64 + wj) - (xi as f64).max(xj as f64)).max(0.0);
            let oy = ((yi as f64 + hi).min(yj as f64 + hj) - (yi as f64).max(yj as f64)).max(0.0);
            let min_area = (wi * hi).min(wj * hj);
            if min_area > 0.0 {
                overlap_sum += (ox * oy / min_area).min(1.0);
            }
        }
    }
    let collision_score = if pair_count == 0 {
        1.0
    } else {
        1.0 - overlap_sum / pair_count as f64
    };

    // boundary: fraction of objects fully inside the plane
    let mut inside = 0usize;
    for i in 0..n {
        let (x, y) = genome.corners[i];
        let (w, h) = meta.sizes_px[i];
        if x >= 0
            && y >= 0
            && (x as f64 + w) <= meta.plane_w as f64
            && (y as f64 + h) <= meta.plane_h as f64
        {
            inside += 1;
        }
    }
    let boundary_score = inside as f64 / n as f64;

    // stability: each supported object's footprint inside its supporter's
    let mut elevated = 0usize;
    let mut stable = 0usize;
    let view = meta.view_of(genome);
    for name in &meta.names {
        let child = &view.boxes[name];
        if let Some(parent_idx) = parent_index(meta, name) {
            elevated += 1;
            let parent = &view.boxes[&meta.names[parent_idx]];
            if parent.x0 <= child.x0
                && child.x1 <= parent.x1
                && parent.y0 <= child.y0
                && child.y1 <= parent.y1
            {
                stable += 1;
            }
        }
    }
    let stability_score = if elevated == 0 {
        1.0
    } else {
        stable as f64 / elevated as f64
    };

    let mut relation_scores = Vec::with_capacity(relations.relations.len());
    for instance in &relations.relations {
        relation_scores.push(score_view(instance, &view, lib)?);
    }
    let semantic = if relation_scores.is_empty() {
        1.0
    } else {
        relation_scores.iter().sum::<f64>() / relation_scores.len() as f64
    };

    let physical = (collision_score + boundary_score + stability_score) / 3.0;
    let total = cfg.physical_weight * physical + cfg.semantic_weight * semantic;
    let is_full = collision_score == 1.0
        && boundary_score == 1.0
        && stability_score == 1.0
        && relation_scores.iter().all(|s| *s == 1.0);
    Ok(FitnessBreakdown {
        collision_score,
        boundary_score,
        stability_score,
        relation_scores,
        total,
        is_full,
    })
}

// Parent index lookup kept out of the hot loop state.
fn parent_index(meta: &GenomeMeta, name: &str) -> Option<usize> {
    meta.parent_of.get(name).and_then(|p| meta.index_of(p))
}

/// Selection, crossover, and mutation until a full-score genome appears or
/// the generation budget runs out. Returns the best genome ever seen, its
/// fitness, and the number of generations consumed.
pub fn evolve(
    pop: Population,
    relations: &TopoRelationSet,
    lib: &RelationLibrary,
    cfg: &GroundingConfig,
) -> Result<(Genome, FitnessBreakdown, u32)> {
    cfg.validate()?;
    let meta = pop.meta.clone();
    let mut genomes = pop.genomes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let elite_count = ((cfg.population as f64) * cfg.elite_frac).round().max(1.0) as usize;

    let mut best: Option<(Genome, FitnessBreakdown)> = None;
    let mut generations_used = 0;

    for generation in 1..=cfg.generations {
        generations_used = generation;
        let fits: Vec<FitnessBreakdown> = genomes
            .par_iter()
            .map(|g| fitness(g, &meta, relations, lib, cfg))
            .collect::<Result<Vec<_>>>()?;

        let mut order: Vec<usize> = (0..genomes.len()).collect();
        order.sort_by(|&a, &b| {
            fits[b]
                .total
                .partial_cmp(&fits[a].total)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| genomes[a].content_hash().cmp(&genomes[b].content_hash()))
        });

        let top = order[0];
        let improved = match &best {
            Some((_, b)) => fits[top].total > b.total,
            None => true,
        };
        if improved {
            best = Some((genomes[top].clone(), fits[top].clone()));
        }
        if best.as_ref().map(|(_, f)| f.is_full).unwrap_or(false) {
            break;
        }

        // next generation: elites survive unmodified, children refill
        let mut next: Vec<Genome> = order[..elite_count.min(order.len())]
            .iter()
            .map(|&i| genomes[i].clone())
            .collect();
        while next.len() < cfg.population {
            let pa = &genomes[order[rng.gen_range(0..elite_count.min(order.len()))]];
            let pb = &genomes[order[rng.gen_range(0..elite_count.min(order.len()))]];
            let mut child = Genome {
                corners: pa
                    .corners
                    .iter()
                    .zip(&pb.corners)
                    .map(|(&a, &b)| if rng.gen_bool(0.5) { a } else { b })
                    .collect(),
            };
            if rng.gen_bool(cfg.mutation_ratio) {
                if rng.gen_bool(0.5) {
                    // random reinitialization, uniform in bounds
                    for (i, corner) in child.corners.iter_mut().enumerate() {
                        let (bx, by) = meta.bounds[i];
                        *corner = (rng.gen_range(0..=bx.max(0)), rng.gen_range(0..=by.max(0)));
                    }
                } else {
                    // Gaussian perturbation, clamped to bounds
                    for (i, corner) in child.corners.iter_mut().enumerate() {
                        let (bx, by) = meta.bounds[i];
                        let dx = gaussian(&mut rng, cfg.gaussian_sigma_px);
                        let dy = gaussian(&mut rng, cfg.gaussian_sigma_px);
                        corner.0 = (corner.0 + dx.round() as i32).clamp(0, bx.max(0));
                        corner.1 = (corner.1 + dy.round() as i32).clamp(0, by.max(0));
                    }
                }
            }
            next.push(child);
        }
        genomes = next;
    }

    let (genome, fit) = best.expect("at least one generation ran");
    Ok((genome, fit, generations_used))
}

/// Box-Muller sample; two uniforms per call keeps the stream deterministic.
fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Corner pixels to normalized plane coordinates in [0, 1]^2.
pub fn normalize(best: &Genome, meta: &GenomeMeta) -> BTreeMap<String, (f64, f64)> {
    let mut out = BTreeMap::new();
    for (i, name) in meta.names.iter().enumerate() {
        let (x, y) = best.corners[i];
        out.insert(
            name.clone(),
            (x as f64 / meta.plane_w as f64, y as f64 / meta.plane_h as f64),
        );
    }
    out
}

/// Normalized plane points back to a continuous cm layout, with z assigned
/// from the support graph.
pub fn to_bbox(
    plane_points: &BTreeMap<String, (f64, f64)>,
    scene: &SceneSpec,
    support: &SupportGraph,
    cfg: &GroundingConfig,
) -> Result<Layout> {
    let map = scene.boundary.plane_map(cfg.plane_w, cfg.plane_h);
    let mut layout = Layout::new();
    for obj in &scene.objects {
        let (nx, ny) = plane_points
            .get(&obj.name)
            .copied()
            .ok_or_else(|| Error::UnknownObject {
                name: obj.name.clone(),
            })?;
        let corner_px = (nx * cfg.plane_w as f64, ny * cfg.plane_h as f64);
        let (w_px, h_px) = map.size_to_px(obj.size);
        let center_px = (corner_px.0 + w_px / 2.0, corner_px.1 + h_px / 2.0);
        let (cx, cy) = map.px_to_cm(center_px.0, center_px.1);
        let z_bottom = support
            .z_level
            .get(&obj.name)
            .copied()
            .unwrap_or(scene.boundary.surface_z);
        let pose = Pose::at(Vec3::new(cx, cy, z_bottom + obj.size.z / 2.0));
        layout.insert(&obj.name, pose, obj.size, (nx, ny));
    }
    Ok(layout)
}
