//! Triangle meshes built from structured patches. Every quadrilateral cell
//! contributes both of its diagonal splittings with weight one half, which
//! keeps the stencil symmetric and removes the orientation bias of a single
//! split.

#[derive(Debug, Clone)]
pub struct Element {
    pub nodes: [usize; 3],
    /// Gradients of the three barycentric basis functions.
    pub grad: [[f64; 2]; 3],
    /// Quadrature weight (area times split factor).
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Mesh {
    pub coords: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    /// Integral of each nodal hat function.
    pub mass: Vec<f64>,
}

impl Mesh {
    pub fn with_nodes(coords: Vec<[f64; 2]>) -> Self {
        let n = coords.len();
        Mesh {
            coords,
            elements: Vec::new(),
            mass: vec![0.0; n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Add the triangle with node ids `nodes` placed at `pts`. The points
    /// may differ from `coords[nodes]` for periodic images.
    pub fn add_triangle(&mut self, nodes: [usize; 3], pts: [[f64; 2]; 3], factor: f64) {
        let [a, b, c] = pts;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det == 0.0 {
            return;
        }
        let inv = 1.0 / det;
        let grad = [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ];
        let weight = 0.5 * det.abs() * factor;
        for &n in &nodes {
            self.mass[n] += weight / 3.0;
        }
        self.elements.push(Element { nodes, grad, weight });
    }

    pub fn total_weight(&self) -> f64 {
        self.elements.iter().map(|e| e.weight).sum()
    }
}

/// Rows of points swept along a second index, optionally closed up at an
/// apex below the first row and optionally periodic along the rows.
#[derive(Debug, Clone)]
pub struct Patch {
    /// `rows[i][j]`; for periodic patches the last column is the periodic
    /// image of column 0 and does not create a node.
    pub rows: Vec<Vec<[f64; 2]>>,
    pub periodic: bool,
    pub apex: Option<[f64; 2]>,
}

impl Patch {
    /// Distinct columns per row.
    pub fn columns(&self) -> usize {
        let len = self.rows[0].len();
        if self.periodic {
            len - 1
        } else {
            len
        }
    }

    pub fn apex_offset(&self) -> usize {
        usize::from(self.apex.is_some())
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        let m = self.columns();
        let j = if self.periodic { j % m } else { j };
        self.apex_offset() + i * m + j
    }

    pub fn build(&self) -> Mesh {
        let m = self.columns();
        let mut coords = Vec::with_capacity(self.apex_offset() + self.rows.len() * m);
        if let Some(a) = self.apex {
            coords.push(a);
        }
        for row in &self.rows {
            coords.extend_from_slice(&row[..m]);
        }
        let mut mesh = Mesh::with_nodes(coords);
        let cols = self.rows[0].len();
        if let Some(a) = self.apex {
            let r0 = &self.rows[0];
            for j in 0..cols - 1 {
                mesh.add_triangle([0, self.node(0, j), self.node(0, j + 1)], [a, r0[j], r0[j + 1]], 1.0);
            }
        }
        for i in 0..self.rows.len() - 1 {
            let (lo, hi) = (&self.rows[i], &self.rows[i + 1]);
            for j in 0..cols - 1 {
                let (na, nb, nc, nd) = (
                    self.node(i, j),
                    self.node(i + 1, j),
                    self.node(i + 1, j + 1),
                    self.node(i, j + 1),
                );
                let (pa, pb, pc, pd) = (lo[j], hi[j], hi[j + 1], lo[j + 1]);
                mesh.add_triangle([na, nb, nc], [pa, pb, pc], 0.5);
                mesh.add_triangle([na, nc, nd], [pa, pc, pd], 0.5);
                mesh.add_triangle([na, nb, nd], [pa, pb, pd], 0.5);
                mesh.add_triangle([nb, nc, nd], [pb, pc, pd], 0.5);
            }
        }
        mesh
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn periodic_disk_area() {
        let m = 64;
        let rows: Vec<Vec<[f64; 2]>> = (1..=10)
            .map(|i| {
                let r = i as f64 / 10.0;
                (0..=m)
                    .map(|j| {
                        let t = 2.0 * PI * j as f64 / m as f64;
                        [r * t.cos(), r * t.sin()]
                    })
                    .collect()
            })
            .collect();
        let patch = Patch {
            rows,
            periodic: true,
            apex: Some([0.0, 0.0]),
        };
        let mesh = patch.build();
        assert_eq!(mesh.n_nodes(), 1 + 10 * m);
        let poly = 0.5 * m as f64 * (2.0 * PI / m as f64).sin();
        assert!((mesh.total_weight() - poly).abs() < 1e-12);
        let mass: f64 = mesh.mass.iter().sum();
        assert!((mass - poly).abs() < 1e-12);
    }

    #[test]
    fn gradients_reproduce_linear_functions() {
        let mut mesh = Mesh::with_nodes(vec![[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]]);
        mesh.add_triangle([0, 1, 2], [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]], 1.0);
        let e = &mesh.elements[0];
        let u: Vec<f64> = mesh.coords.iter().map(|c| 2.0 * c[0] - 3.0 * c[1] + 1.0).collect();
        let gx: f64 = (0..3).map(|k| u[e.nodes[k]] * e.grad[k][0]).sum();
        let gy: f64 = (0..3).map(|k| u[e.nodes[k]] * e.grad[k][1]).sum();
        assert!((gx - 2.0).abs() < 1e-12 && (gy + 3.0).abs() < 1e-12);
    }
}
