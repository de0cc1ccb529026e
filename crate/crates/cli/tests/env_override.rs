use anopipe_cli::config::OUTPUT_ROOT_ENV;
use anopipe_cli::{PipelineConfig, Preset};

#[test]
fn environment_overrides_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "output_root = \"from_file\"\n").unwrap();
    std::env::remove_var(OUTPUT_ROOT_ENV);
    let cfg = PipelineConfig::resolve(Some(&path), Some(Preset::DeskScale), None).unwrap();
    assert_eq!(cfg.output_root, std::path::PathBuf::from("from_file"));
    std::env::set_var(OUTPUT_ROOT_ENV, "/tmp/elsewhere");
    let cfg = PipelineConfig::resolve(Some(&path), None, None).unwrap();
    assert_eq!(cfg.output_root, std::path::PathBuf::from("/tmp/elsewhere"));
    std::env::remove_var(OUTPUT_ROOT_ENV);
}
