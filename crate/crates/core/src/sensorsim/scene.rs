use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bvh, SceneSpec, SimError, SurfaceKind};
use crate::geom::{Point3, Triangle};
use crate::meshio::{Label, TriangleMesh};

const TISSUE_COLOR: [u8; 3] = [196, 112, 108];
const PIN_COLOR: [u8; 3] = [40, 200, 60];

/// A fiducial pin: a mesh vertex with a stable id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinSite {
    pub id: u32,
    pub vertex: u32,
    pub position: Point3,
}

/// A ground-truth mesh with its pins and a ray-casting accelerator.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: TriangleMesh,
    pins: Vec<PinSite>,
    bvh: Bvh,
}

impl Scene {
    pub fn new(mesh: TriangleMesh, pins: Vec<PinSite>) -> Self {
        let bvh = Bvh::build(&mesh);
        Scene { mesh, pins, bvh }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn pins(&self) -> &[PinSite] {
        &self.pins
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn into_mesh(self) -> TriangleMesh {
        self.mesh
    }
}

/// Builds the regular-grid height field described by `spec`. Deterministic
/// for a given seed; the seed only affects bump placement.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<Scene, SimError> {
    spec.validate()?;
    let h = spec.spacing;
    let nx = (spec.extent[0] / h + 1e-9).floor() as usize + 1;
    let ny = (spec.extent[1] / h + 1e-9).floor() as usize + 1;
    let x0 = -((nx - 1) as f64) * h / 2.0;
    let y0 = -((ny - 1) as f64) * h / 2.0;
    let grid = |i: usize, j: usize| (x0 + i as f64 * h, y0 + j as f64 * h);

    let heights: Vec<f64> = match spec.surface {
        SurfaceKind::Planar => vec![0.0; nx * ny],
        SurfaceKind::Bumps { count, amplitude, width } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Centres sit on vertices so the peak height is attained exactly.
            let centers: Vec<(f64, f64)> =
                (0..count).map(|_| grid(rng.random_range(0..nx), rng.random_range(0..ny))).collect();
            (0..nx * ny)
                .map(|k| {
                    let (x, y) = grid(k % nx, k / nx);
                    let keep: f64 = centers
                        .iter()
                        .map(|&(cx, cy)| {
                            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                            1.0 - (-r2 / (2.0 * width * width)).exp()
                        })
                        .product();
                    amplitude * (1.0 - keep)
                })
                .collect()
        }
    };

    let vertices: Vec<Point3> = (0..nx * ny)
        .map(|k| {
            let (x, y) = grid(k % nx, k / nx);
            Point3::new(x, y, heights[k])
        })
        .collect();

    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = (j * nx + i) as u32;
            let b = a + 1;
            let c = a + nx as u32;
            let d = c + 1;
            // Counter-clockwise seen from +z.
            faces.push(Triangle::new(a, b, d));
            faces.push(Triangle::new(a, d, c));
        }
    }

    let mut labels = vec![Label::Inlier; vertices.len()];
    let mut materials = vec![0u8; vertices.len()];
    for region in &spec.regions {
        for (k, v) in vertices.iter().enumerate() {
            if region.shape.contains(v.x, v.y) {
                if let Some(m) = region.material {
                    materials[k] = m;
                }
                if let Some(o) = region.outlier {
                    labels[k] = if o { Label::Outlier } else { Label::Inlier };
                }
            }
        }
    }

    let pins = pin_sites(spec, nx, ny, &grid, &vertices);
    let mut colors = vec![TISSUE_COLOR; vertices.len()];
    for p in &pins {
        colors[p.vertex as usize] = PIN_COLOR;
    }

    let mut mesh = TriangleMesh::new(vertices, faces)?;
    mesh.set_labels(labels)?;
    mesh.set_materials(materials)?;
    mesh.set_colors(Some(colors))?;
    Ok(Scene::new(mesh, pins))
}

/// Pins on a near-square lattice inside the margin, snapped to vertices.
fn pin_sites(
    spec: &SceneSpec,
    nx: usize,
    ny: usize,
    grid: &dyn Fn(usize, usize) -> (f64, f64),
    vertices: &[Point3],
) -> Vec<PinSite> {
    let n = spec.pins.count;
    if n == 0 {
        return Vec::new();
    }
    let (w, hgt) = (spec.extent[0] - 2.0 * spec.pins.margin, spec.extent[1] - 2.0 * spec.pins.margin);
    // A full lattice whose column/row ratio best matches the area's aspect.
    let aspect = (w / hgt.max(1e-12)).ln();
    let cols = (1..=n)
        .filter(|c| n.is_multiple_of(*c))
        .min_by(|&a, &b| {
            let score = |c: usize| ((c * c) as f64 / n as f64).ln() - aspect;
            score(a).abs().total_cmp(&score(b).abs())
        })
        .unwrap_or(1);
    let rows = n.div_ceil(cols);
    let (x_first, y_first) = grid(0, 0);
    let mut seen = std::collections::HashSet::new();
    let mut pins = Vec::with_capacity(n);
    for k in 0..n {
        let (c, r) = (k % cols, k / cols);
        let fx = if cols > 1 { c as f64 / (cols - 1) as f64 } else { 0.5 };
        let fy = if rows > 1 { r as f64 / (rows - 1) as f64 } else { 0.5 };
        let x = -w / 2.0 + fx * w;
        let y = -hgt / 2.0 + fy * hgt;
        let i = (((x - x_first) / spec.spacing).round() as isize).clamp(0, nx as isize - 1) as usize;
        let j = (((y - y_first) / spec.spacing).round() as isize).clamp(0, ny as isize - 1) as usize;
        let vertex = (j * nx + i) as u32;
        if seen.insert(vertex) {
            pins.push(PinSite { id: pins.len() as u32 + 1, vertex, position: vertices[vertex as usize] });
        }
    }
    pins
}
