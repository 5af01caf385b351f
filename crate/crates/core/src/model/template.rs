use crate::ffd::{apply_deformation, build_lattice, decompose, DEFAULT_PADDING};
use crate::losses::TemplateGeometry;
use crate::mesh::{sample_surface, subdivide_edges};
use crate::{ControlLattice, DeformationDelta, DeformationMatrix, Error, Mesh, PointCloud, Result};

/// How a template is prepared from its mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateOptions {
    pub degrees: [usize; 3],
    pub n_samples: usize,
    /// Subdivide until no edge is longer than this; `None` keeps the mesh.
    pub max_edge: Option<f64>,
    pub padding: f64,
    pub seed: u64,
}

impl Default for TemplateOptions {
    fn default() -> Self {
        Self {
            degrees: [3, 3, 3],
            n_samples: crate::SURFACE_SAMPLES,
            max_edge: Some(crate::TEMPLATE_MAX_EDGE),
            padding: DEFAULT_PADDING,
            seed: 0,
        }
    }
}

/// A template mesh with its lattice, surface samples and both Bernstein
/// decompositions.
#[derive(Debug, Clone)]
pub struct Template {
    pub id: String,
    /// The (subdivided) mesh.
    pub mesh: Mesh,
    pub lattice: ControlLattice,
    /// Surface samples; carries labels for labelled templates.
    pub samples: PointCloud,
    pub sample_basis: DeformationMatrix,
    pub vertex_basis: DeformationMatrix,
}

/// Subdivides `mesh`, builds its lattice, and decomposes both the surface
/// samples and the vertices.
///
/// A `labeled` cloud replaces the random surface samples, so its labels stay
/// aligned with the sample decomposition.
pub fn build_template(
    id: impl Into<String>,
    mesh: &Mesh,
    options: &TemplateOptions,
    labeled: Option<PointCloud>,
) -> Result<Template> {
    mesh.ensure_nonempty()?;
    let mesh = match options.max_edge {
        Some(eps) => subdivide_edges(mesh, eps)?,
        None => mesh.clone(),
    };
    let samples = match labeled {
        Some(cloud) => {
            if cloud.is_empty() {
                return Err(Error::InvalidArgument("labelled template cloud is empty".into()));
            }
            cloud
        }
        None => sample_surface(&mesh, options.n_samples, options.seed)?,
    };
    let lattice = build_lattice(mesh.vertices(), options.degrees, options.padding)?;
    let sample_basis = decompose(&lattice, samples.points());
    let vertex_basis = decompose(&lattice, mesh.vertices());
    Ok(Template { id: id.into(), mesh, lattice, samples, sample_basis, vertex_basis })
}

impl Template {
    /// Number of control points `M`.
    pub fn control_count(&self) -> usize {
        self.lattice.len()
    }

    pub fn geometry<'a>(&'a self, basis: &'a DeformationMatrix) -> TemplateGeometry<'a> {
        TemplateGeometry { basis, control_points: self.lattice.control_points() }
    }

    /// Deformed surface samples, labels carried along.
    pub fn deform_samples(&self, delta: &DeformationDelta) -> Result<PointCloud> {
        apply_deformation(&self.sample_basis, &self.lattice, delta, self.samples.labels())
    }

    /// Deformed mesh: vertices moved through the vertex decomposition, faces
    /// unchanged.
    pub fn deform_mesh(&self, delta: &DeformationDelta) -> Result<Mesh> {
        let cloud = apply_deformation(&self.vertex_basis, &self.lattice, delta, None)?;
        self.mesh.with_vertices(cloud.into_points())
    }
}
