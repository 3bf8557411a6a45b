use std::collections::HashMap;

use super::mc_tables::TRIANGLE_TABLE;
use crate::volume::LabelMask;

const CORNERS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Triangle mesh of a binary mask's 0.5 iso-surface.
#[derive(Debug, Clone, Default)]
pub struct Mesh {
    /// Vertex positions in half-voxel units: a vertex on the edge between
    /// voxel centres `a` and `b` has key `a + b`. Exact, so usable for
    /// grouping by plane.
    pub keys: Vec<[i64; 3]>,
    /// Physical positions in mm (`key / 2 * spacing`).
    pub positions: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Absolute enclosed volume by the divergence theorem.
    pub fn volume(&self) -> f64 {
        let mut v = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.positions[i]);
            v += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]);
        }
        (v / 6.0).abs()
    }

    pub fn area(&self) -> f64 {
        let mut s = 0.0;
        for t in &self.triangles {
            let [a, b, c] = t.map(|i| self.positions[i]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let x = [
                u[1] * w[2] - u[2] * w[1],
                u[2] * w[0] - u[0] * w[2],
                u[0] * w[1] - u[1] * w[0],
            ];
            s += (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        }
        s / 2.0
    }
}

/// Marching cubes over the nonzero voxels of `mask` at iso-level 0.5,
/// treating everything outside the grid as background.
pub fn marching_cubes(mask: &LabelMask) -> Mesh {
    let dims = mask.dims();
    let sp = mask.spacing();
    let [nx, ny, nz] = dims.map(|d| d as i64);
    let inside = |x: i64, y: i64, z: i64| {
        x >= 0
            && y >= 0
            && z >= 0
            && x < nx
            && y < ny
            && z < nz
            && mask.is_set(mask.index(x as usize, y as usize, z as usize))
    };
    let mut mesh = Mesh::default();
    let mut lookup: HashMap<[i64; 3], usize> = HashMap::new();
    for cz in -1..nz {
        for cy in -1..ny {
            for cx in -1..nx {
                let mut case = 0usize;
                for (k, c) in CORNERS.iter().enumerate() {
                    if !inside(cx + c[0], cy + c[1], cz + c[2]) {
                        case |= 1 << k;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRIANGLE_TABLE[case];
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let ids = [tri[0], tri[1], tri[2]].map(|e| {
                        let (a, b) = EDGES[e as usize];
                        let key = [0, 1, 2].map(|ax| {
                            2 * [cx, cy, cz][ax] + CORNERS[a][ax] + CORNERS[b][ax]
                        });
                        *lookup.entry(key).or_insert_with(|| {
                            mesh.keys.push(key);
                            mesh.positions
                                .push([0, 1, 2].map(|ax| key[ax] as f64 * 0.5 * sp[ax]));
                            mesh.keys.len() - 1
                        })
                    });
                    mesh.triangles.push(ids);
                }
            }
        }
    }
    mesh
}
