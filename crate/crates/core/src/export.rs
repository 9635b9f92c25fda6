//! Polygon meshes of realized bodies: OBJ text and a JSON vertex+facet form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::ConvexPolytope;
use crate::sphere::Vec3;

/// Vertices and outward (counterclockwise from outside) polygon faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<Vec<usize>>,
    /// Outward unit normal of each face, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normals: Vec<[f64; 3]>,
}

impl Mesh {
    /// Non-empty facets of `p`, with vertices sorted lexicographically and
    /// unused vertices dropped.
    pub fn from_polytope(p: &ConvexPolytope) -> Self {
        let verts = p.vertices();
        let mut used = vec![false; verts.len()];
        for f in p.facets().iter().filter(|f| !f.is_empty()) {
            for &v in &f.vertex_loop {
                used[v] = true;
            }
        }
        let mut order: Vec<usize> = (0..verts.len()).filter(|&v| used[v]).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (verts[a], verts[b]);
            x[0].total_cmp(&y[0])
                .then(x[1].total_cmp(&y[1]))
                .then(x[2].total_cmp(&y[2]))
        });
        let mut index = vec![usize::MAX; verts.len()];
        for (k, &v) in order.iter().enumerate() {
            index[v] = k;
        }
        let (faces, normals) = p
            .facets()
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                let n = f.normal.as_vec();
                (
                    f.vertex_loop.iter().map(|&v| index[v]).collect(),
                    [n.x, n.y, n.z],
                )
            })
            .unzip();
        Mesh {
            vertices: order.iter().map(|&v| [verts[v].x, verts[v].y, verts[v].z]).collect(),
            faces,
            normals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.normals.is_empty() && self.normals.len() != self.faces.len() {
            return Err(Error::InvalidInput(format!(
                "{} normals for {} faces",
                self.normals.len(),
                self.faces.len()
            )));
        }
        for (k, f) in self.faces.iter().enumerate() {
            if f.len() < 3 {
                return Err(Error::InvalidInput(format!("face {k} has {} vertices", f.len())));
            }
            if let Some(&v) = f.iter().find(|&&v| v >= self.vertices.len()) {
                return Err(Error::InvalidInput(format!("face {k} references vertex {v}")));
            }
        }
        if self.vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    fn point(&self, v: usize) -> Vec3 {
        Vec3::from(self.vertices[v])
    }

    /// Signed volume by the divergence theorem; positive for outward faces.
    pub fn volume(&self) -> f64 {
        let mut vol = 0.0;
        for f in &self.faces {
            let a = self.point(f[0]);
            for k in 1..f.len() - 1 {
                vol += a.dot(&self.point(f[k]).cross(&self.point(f[k + 1])));
            }
        }
        vol / 6.0
    }

    pub fn face_area(&self, k: usize) -> f64 {
        let f = &self.faces[k];
        let a = self.point(f[0]);
        let mut s = Vec3::zeros();
        for i in 1..f.len() - 1 {
            s += (self.point(f[i]) - a).cross(&(self.point(f[i + 1]) - a));
        }
        s.norm() / 2.0
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|k| self.face_area(k)).sum()
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            out.push('f');
            for v in f {
                let _ = write!(out, " {}", v + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Parses `v` and `f` lines; other records are ignored. Face entries
    /// may carry `/vt/vn` suffixes.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut tok = line.split_whitespace();
            let bad = |what: &str| Error::InvalidInput(format!("line {}: {what}", ln + 1));
            match tok.next() {
                Some("v") => {
                    let xs: Vec<f64> = tok
                        .take(3)
                        .map(|t| t.parse::<f64>().map_err(|_| bad("bad coordinate")))
                        .collect::<Result<_>>()?;
                    if xs.len() != 3 {
                        return Err(bad("vertex needs three coordinates"));
                    }
                    vertices.push([xs[0], xs[1], xs[2]]);
                }
                Some("f") => {
                    let f: Vec<usize> = tok
                        .map(|t| {
                            let idx = t.split('/').next().unwrap_or("");
                            match idx.parse::<usize>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(bad("bad face index")),
                            }
                        })
                        .collect::<Result<_>>()?;
                    faces.push(f);
                }
                _ => {}
            }
        }
        let mesh = Mesh {
            vertices,
            faces,
            normals: Vec::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }
}

pub fn write_obj(p: &ConvexPolytope, path: &Path) -> Result<()> {
    std::fs::write(path, Mesh::from_polytope(p).to_obj())?;
    Ok(())
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    Mesh::from_obj(&std::fs::read_to_string(path)?)
}

pub fn write_body_json(p: &ConvexPolytope, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&Mesh::from_polytope(p))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_body_json(path: &Path) -> Result<Mesh> {
    let mesh: Mesh = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    mesh.validate()?;
    Ok(mesh)
}
