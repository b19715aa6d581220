use serde::{Deserialize, Serialize};

/// Where the base point `x0` of the pointed manifold sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Basepoint {
    /// `"auto"`: a fixed, variant-specific point of `M`.
    Named(String),
    Point(Vec<f64>),
}

impl Default for Basepoint {
    fn default() -> Self {
        Basepoint::Named("auto".into())
    }
}

/// Height profiles for graph manifolds `{(u, g(u))}` of codimension one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphProfile {
    Flat,
    /// `g(u) = curvature * |u|^2 / 2`.
    Paraboloid {
        curvature: f64,
    },
    /// `g(u) = amplitude * sum_j sin(frequency * u_j)`.
    Wave {
        amplitude: f64,
        frequency: f64,
    },
}

impl GraphProfile {
    pub fn value(&self, u: &[f64]) -> f64 {
        match *self {
            GraphProfile::Flat => 0.0,
            GraphProfile::Paraboloid { curvature } => {
                0.5 * curvature * u.iter().map(|v| v * v).sum::<f64>()
            }
            GraphProfile::Wave {
                amplitude,
                frequency,
            } => amplitude * u.iter().map(|v| (frequency * v).sin()).sum::<f64>(),
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        match *self {
            GraphProfile::Flat => vec![0.0; u.len()],
            GraphProfile::Paraboloid { curvature } => u.iter().map(|v| curvature * v).collect(),
            GraphProfile::Wave {
                amplitude,
                frequency,
            } => u
                .iter()
                .map(|v| amplitude * frequency * (frequency * v).cos())
                .collect(),
        }
    }

    /// The Hessian is diagonal for every built-in profile.
    pub fn hessian_diag(&self, u: &[f64]) -> Vec<f64> {
        match *self {
            GraphProfile::Flat => vec![0.0; u.len()],
            GraphProfile::Paraboloid { curvature } => vec![curvature; u.len()],
            GraphProfile::Wave {
                amplitude,
                frequency,
            } => u
                .iter()
                .map(|v| -amplitude * frequency * frequency * (frequency * v).sin())
                .collect(),
        }
    }

    /// Upper bound on the largest principal curvature.
    pub fn curvature_bound(&self) -> f64 {
        match *self {
            GraphProfile::Flat => 0.0,
            GraphProfile::Paraboloid { curvature } => curvature.abs(),
            GraphProfile::Wave {
                amplitude,
                frequency,
            } => (amplitude * frequency * frequency).abs(),
        }
    }
}

/// Serialised description of an embedded submanifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Circle {
        radius: f64,
        #[serde(default)]
        basepoint: Basepoint,
    },
    Sphere2 {
        radius: f64,
        #[serde(default)]
        basepoint: Basepoint,
    },
    Torus {
        #[serde(rename = "R")]
        major: f64,
        #[serde(rename = "r")]
        minor: f64,
        #[serde(default)]
        basepoint: Basepoint,
    },
    /// Graph of a function of `dim` variables in `R^(dim+1)`. The manifold is the
    /// whole graph; `domain_halfwidth` only bounds where points are sampled.
    Graph {
        dim: usize,
        profile: GraphProfile,
        domain_halfwidth: f64,
        #[serde(default)]
        basepoint: Basepoint,
    },
    /// Unit sphere of the smooth Minkowski norm on `R^3`.
    NormSphere {
        profile: String,
        #[serde(default)]
        basepoint: Basepoint,
    },
}

impl ManifoldSpec {
    pub fn circle(radius: f64) -> Self {
        ManifoldSpec::Circle {
            radius,
            basepoint: Basepoint::default(),
        }
    }

    pub fn sphere(radius: f64) -> Self {
        ManifoldSpec::Sphere2 {
            radius,
            basepoint: Basepoint::default(),
        }
    }

    pub fn torus(major: f64, minor: f64) -> Self {
        ManifoldSpec::Torus {
            major,
            minor,
            basepoint: Basepoint::default(),
        }
    }

    pub fn graph(dim: usize, profile: GraphProfile, domain_halfwidth: f64) -> Self {
        ManifoldSpec::Graph {
            dim,
            profile,
            domain_halfwidth,
            basepoint: Basepoint::default(),
        }
    }

    pub fn norm_sphere() -> Self {
        ManifoldSpec::NormSphere {
            profile: "paper-phi".into(),
            basepoint: Basepoint::default(),
        }
    }

    pub fn basepoint(&self) -> &Basepoint {
        match self {
            ManifoldSpec::Circle { basepoint, .. }
            | ManifoldSpec::Sphere2 { basepoint, .. }
            | ManifoldSpec::Torus { basepoint, .. }
            | ManifoldSpec::Graph { basepoint, .. }
            | ManifoldSpec::NormSphere { basepoint, .. } => basepoint,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldSpec::Circle { .. } => 2,
            ManifoldSpec::Sphere2 { .. } | ManifoldSpec::Torus { .. } => 3,
            ManifoldSpec::Graph { dim, .. } => dim + 1,
            ManifoldSpec::NormSphere { .. } => 3,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            ManifoldSpec::Circle { .. } => 1,
            ManifoldSpec::Graph { dim, .. } => *dim,
            _ => 2,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ManifoldSpec::Circle { .. } => "circle",
            ManifoldSpec::Sphere2 { .. } => "sphere2",
            ManifoldSpec::Torus { .. } => "torus",
            ManifoldSpec::Graph { .. } => "graph",
            ManifoldSpec::NormSphere { .. } => "norm_sphere",
        }
    }
}
