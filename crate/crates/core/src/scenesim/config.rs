//! TOML scene files.
//!
//! ```toml
//! spec_version = 1
//!
//! [camera]
//! fx = 100.0
//! fy = 100.0
//! cx = 79.5
//! cy = 47.5
//! width = 160
//! height = 96
//! prev = { position = [-0.4, 0.0, 0.0] }
//! next = { position = [0.4, 0.0, 0.0], rotation_deg = [0.0, 0.5, 0.0] }
//!
//! [[plane]]
//! depth = 10.0
//! normal = [0.1, 0.0, 1.0]       # optional, default [0, 0, 1]
//! texture = { seed = 1, cell = 1.6 }
//!
//! [[object]]
//! size = [1.2, 0.9]
//! trajectory = [[-0.3, 0.0, 5.0], [0.0, 0.0, 5.0], [0.3, 0.0, 5.0]]
//! texture = { seed = 2, cell = 0.8, contrast = 0.4 }
//!
//! [prior]
//! mode = "bias:0.3"                # exact | noise:<sigma> | bias:<beta>
//! seed = 7
//!
//! [solver]                        # optional, see SolverConfig
//! fill_radius = 8
//! ```
//!
//! Unknown keys are rejected. A `[solver]` table is passed through untouched
//! for the solver to interpret.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{CameraSpec, ObjectSpec, PlaneSpec, PriorSpec, SceneSpec};
use crate::error::{Error, Result};

/// The only scene-file version this build reads.
pub const SPEC_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    spec_version: u32,
    camera: CameraSpec,
    #[serde(default)]
    plane: Vec<PlaneSpec>,
    #[serde(default)]
    object: Vec<ObjectSpec>,
    #[serde(default)]
    prior: PriorSpec,
    #[serde(default)]
    solver: Option<toml::Table>,
}

/// Deserializes TOML text, reporting failures with their line number.
pub(crate) fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = match line {
            Some(l) => format!("line {l}: {}", e.message().trim_end()),
            None => e.message().trim_end().to_string(),
        };
        Error::ConfigParse {
            path: path.to_path_buf(),
            message,
        }
    })
}

/// Reads the version field alone so a newer file is reported as such rather
/// than as a schema error.
pub(crate) fn check_version(text: &str, path: &Path) -> Result<()> {
    #[derive(Deserialize)]
    struct VersionOnly {
        spec_version: Option<u32>,
    }
    let table: toml::Table = parse_toml(text, path)?;
    let v: VersionOnly = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigParse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
    match v.spec_version {
        None => Err(Error::ConfigParse {
            path: path.to_path_buf(),
            message: "missing field `spec_version`".into(),
        }),
        Some(found) if found != SPEC_VERSION => Err(Error::SpecVersion {
            found,
            supported: SPEC_VERSION,
        }),
        Some(_) => Ok(()),
    }
}

/// Parses and validates a scene file, returning the raw `[solver]` table
/// if present.
pub fn parse_scene(text: &str, path: &Path) -> Result<(SceneSpec, Option<toml::Table>)> {
    check_version(text, path)?;
    let doc: SceneDocument = parse_toml(text, path)?;
    let spec = SceneSpec {
        spec_version: doc.spec_version,
        camera: doc.camera,
        planes: doc.plane,
        objects: doc.object,
        prior: doc.prior,
    };
    spec.validate()?;
    Ok((spec, doc.solver))
}

pub fn load_scene(path: &Path) -> Result<(SceneSpec, Option<toml::Table>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scene(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::PriorMode;

    const MINIMAL: &str = r#"
spec_version = 1

[camera]
fx = 100.0
fy = 100.0
cx = 31.5
cy = 23.5
width = 64
height = 48

[[plane]]
depth = 10.0
texture = { seed = 1, cell = 1.5 }
"#;

    fn p() -> &'static Path {
        Path::new("scene.toml")
    }

    #[test]
    fn parses_minimal_scene() {
        let (s, solver) = parse_scene(MINIMAL, p()).unwrap();
        assert_eq!(s.planes.len(), 1);
        assert!(s.objects.is_empty());
        assert_eq!(s.prior.mode, PriorMode::Exact);
        assert!(solver.is_none());
    }

    #[test]
    fn missing_key_is_named_with_line() {
        let text = MINIMAL.replace("fy = 100.0\n", "");
        let err = parse_scene(&text, p()).unwrap_err().to_string();
        assert!(err.contains("`fy`"), "{err}");
        assert!(err.contains("line "), "{err}");
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = MINIMAL.replace("depth = 10.0", "depth = = 10.0");
        let err = parse_scene(&text, p()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 13"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        let text = MINIMAL.replace("width = 64", "width = 64\nzoom = 2");
        assert!(parse_scene(&text, p()).unwrap_err().to_string().contains("zoom"));
        let text = MINIMAL.replace("spec_version = 1", "spec_version = 9");
        assert!(matches!(
            parse_scene(&text, p()),
            Err(Error::SpecVersion { found: 9, .. })
        ));
    }

    #[test]
    fn solver_table_is_passed_through() {
        let text = format!("{MINIMAL}\n[solver]\nfill_radius = 4\n");
        let (_, solver) = parse_scene(&text, p()).unwrap();
        assert_eq!(solver.unwrap()["fill_radius"].as_integer(), Some(4));
    }
}
