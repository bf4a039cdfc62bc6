use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conflate::{ConflationParams, HighwayTable};

use super::PipelineError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub vector_map: Option<PathBuf>,
    pub point_cloud: Option<PathBuf>,
    pub osm: Option<PathBuf>,
    pub slam_trajectory: Option<PathBuf>,
    pub gnss_trajectory: Option<PathBuf>,
    pub control_points: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub highway_table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentParams {
    /// Margin added to each side of the joint bounding box, as a fraction
    /// of its size.
    pub extent_fraction: f64,
    /// Lower bound for that margin, meters.
    pub extent_min_margin: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        AlignmentParams { extent_fraction: crate::align::DEFAULT_EXTENT_FRACTION, extent_min_margin: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewSettings {
    pub bind: String,
    /// Vertex budget per served layer.
    pub vertex_budget: usize,
    /// Grid cell of the point-cloud preview, meters.
    pub cloud_grid: f64,
}

impl Default for ReviewSettings {
    fn default() -> Self {
        ReviewSettings { bind: "127.0.0.1:8080".into(), vertex_budget: 50_000, cloud_grid: 0.5 }
    }
}

/// Pipeline configuration, read from TOML. Relative paths resolve against
/// the directory of the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub output: Output,
    pub alignment: AlignmentParams,
    pub conflation: ConflationParams,
    pub review: ReviewSettings,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub control_points: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub buffer_init: Option<f64>,
    pub buffer_growth: Option<f64>,
    pub score_threshold: Option<f64>,
    pub length_threshold: Option<f64>,
    pub overwrite_attrs: bool,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<PipelineConfig, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(format!("config: {}", e.message())))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.vector_map,
            &mut i.point_cloud,
            &mut i.osm,
            &mut i.slam_trajectory,
            &mut i.gnss_trajectory,
            &mut i.control_points,
            &mut i.labels,
            &mut i.highway_table,
        ] {
            fix(p);
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    /// Flags win over the file. Paths given on the command line are taken
    /// as they are.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.control_points {
            self.inputs.control_points = Some(p.clone());
        }
        if let Some(p) = &o.labels {
            self.inputs.labels = Some(p.clone());
        }
        let m = &mut self.conflation.matching;
        if let Some(v) = o.buffer_init {
            m.buffer.initial = v;
        }
        if let Some(v) = o.buffer_growth {
            m.buffer.growth = v;
        }
        if let Some(v) = o.score_threshold {
            m.score_threshold = v;
        }
        if let Some(v) = o.length_threshold {
            self.conflation.length_threshold = v;
        }
        if o.overwrite_attrs {
            self.conflation.overwrite = true;
        }
        if let Some(p) = &o.out {
            self.output.dir = p.clone();
        }
    }

    /// Check parameters and that every referenced input exists; loads the
    /// highway table if one is configured.
    pub fn validate(&mut self) -> Result<(), PipelineError> {
        self.conflation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let a = &self.alignment;
        if !(a.extent_fraction.is_finite() && a.extent_fraction > 0.0 && a.extent_min_margin >= 0.0) {
            return Err(PipelineError::Config("alignment extent margins must be positive".into()));
        }
        let i = &self.inputs;
        let named = [
            ("vector_map", &i.vector_map),
            ("point_cloud", &i.point_cloud),
            ("osm", &i.osm),
            ("slam_trajectory", &i.slam_trajectory),
            ("gnss_trajectory", &i.gnss_trajectory),
            ("control_points", &i.control_points),
            ("labels", &i.labels),
            ("highway_table", &i.highway_table),
        ];
        for (name, p) in named {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(PipelineError::Config(format!("{name}: {} does not exist", p.display())));
                }
            }
        }
        if let Some(p) = &self.inputs.highway_table {
            let bytes = std::fs::read(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
            self.conflation.highway_table = HighwayTable::from_json(&bytes)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
        }
        Ok(())
    }

    pub fn require<'a>(&self, name: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, PipelineError> {
        p.as_deref().ok_or_else(|| PipelineError::Config(format!("inputs.{name} is not configured")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = PipelineConfig::from_toml(
            "[inputs]\nvector_map = \"maps/vm.osm\"\nosm = \"/abs/osm.osm\"\n[conflation]\nscore_threshold = 0.7\n[conflation.buffer]\ninitial = 4.0\ngrowth = 2.0\nmax_growths = 3\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.inputs.vector_map, Some(PathBuf::from("/data/maps/vm.osm")));
        assert_eq!(cfg.inputs.osm, Some(PathBuf::from("/abs/osm.osm")));
        assert_eq!(cfg.output.dir, PathBuf::from("/data/out"));
        assert_eq!(cfg.conflation.matching.score_threshold, 0.7);
        assert_eq!(cfg.conflation.matching.buffer.initial, 4.0);
        assert_eq!(cfg.conflation.length_threshold, 1.5);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = PipelineConfig::from_toml("[inputs]\nvm = \"x\"\n", Path::new(".")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn flags_win() {
        let mut cfg = PipelineConfig::from_toml("[conflation]\nlength_threshold = 3.0\n", Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            length_threshold: Some(2.0),
            buffer_init: Some(7.0),
            overwrite_attrs: true,
            out: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(cfg.conflation.length_threshold, 2.0);
        assert_eq!(cfg.conflation.matching.buffer.initial, 7.0);
        assert!(cfg.conflation.overwrite);
        assert_eq!(cfg.output.dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn validation() {
        let mut cfg = PipelineConfig::default();
        cfg.conflation.matching.weights.area = 0.5;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = PipelineConfig::default();
        cfg.inputs.osm = Some("/nonexistent/osm.osm".into());
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = PipelineConfig::default();
        cfg.conflation.length_threshold = 0.0;
        assert!(cfg.validate().is_err());
    }
}
