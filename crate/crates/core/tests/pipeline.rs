use std::fs;
use std::path::Path;

use penning_crystal::io::{read_positions_csv, CRYSTAL_HEADER, SWEEP_HEADER};
use penning_crystal::pipeline::{
    emit_figure_data, run_pipeline, run_pipeline_with, PipelineOptions, RunManifest, StageStatus, MANIFEST_FILE,
};
use penning_crystal::units::ConfigDocument;
use penning_crystal::Error;

fn config(n_ions: usize) -> ConfigDocument {
    ConfigDocument::from_json_str(&format!(
        r#"{{"omega_z_hz": 795e3, "omega_c_ratio": 9.645, "omega_eff_ratio": 0.25,
            "c4": 0.002472, "v_w": 0.0025, "n_ions": {n_ions},
            "run": {{"delta_grid": {{"min": 1e-4, "max": 1e2, "points": 7}}}}}}"#
    ))
    .unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_pipeline_with(&config(19), &PipelineOptions::new(dir.path())).unwrap();
    assert!(manifest.stages.iter().all(|s| s.status == StageStatus::Ok));
    for name in [
        "crystal",
        "crystal_meta",
        "spectrum",
        "eigenvectors",
        "couplings",
        "sweep",
    ] {
        assert!(manifest.output(name).is_ok(), "{name}");
    }
    assert_eq!(
        first_line(manifest.output("crystal").unwrap()),
        CRYSTAL_HEADER.join(",")
    );
    assert_eq!(first_line(manifest.output("sweep").unwrap()), SWEEP_HEADER.join(","));
    let positions = read_positions_csv(manifest.output("crystal").unwrap()).unwrap();
    assert_eq!(positions.len(), 19);
    let couplings = fs::read_to_string(manifest.output("couplings").unwrap()).unwrap();
    assert_eq!(couplings.lines().count(), 1 + 19 * 18 / 2);

    let reloaded = RunManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(reloaded.outputs, manifest.outputs);
}

#[test]
fn single_ion_run_skips_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_pipeline_with(&config(1), &PipelineOptions::new(dir.path())).unwrap();
    let sweep = manifest.stages.iter().find(|s| s.name == "sweep").unwrap();
    assert_eq!(sweep.status, StageStatus::Skipped);
    let text = fs::read_to_string(manifest.output("sweep").unwrap()).unwrap();
    assert_eq!(text.lines().count(), 1);
    let positions = read_positions_csv(manifest.output("crystal").unwrap()).unwrap();
    assert_eq!(positions, vec![[0.0, 0.0]]);
}

#[test]
fn nonconfining_rotation_is_rejected() {
    let doc = ConfigDocument::from_json_str(
        r#"{"omega_z_hz": 795e3, "omega_c_ratio": 9.645, "omega_ratio": 0.030,
            "c4": 0.002472, "v_w": 0.0025, "n_ions": 19}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = run_pipeline_with(&doc, &PipelineOptions::new(dir.path())).unwrap_err();
    assert!(matches!(err, Error::ConfigInvalid(_)), "{err}");
    assert!(err.to_string().contains("omega_c*Omega - Omega^2 - 1/2"));
}

#[test]
fn unknown_keys_and_ambiguous_rotation_are_rejected() {
    assert!(ConfigDocument::from_json_str(r#"{"omega_z_hz": 1.0, "n_ions": 3, "bogus": 1}"#).is_err());
    let doc = ConfigDocument::from_json_str(
        r#"{"omega_z_hz": 795e3, "omega_c_ratio": 9.645, "omega_ratio": 0.0579,
            "omega_eff_ratio": 0.25, "c4": 0.0, "v_w": 0.0, "n_ions": 3}"#,
    )
    .unwrap();
    assert!(matches!(doc.to_trap_config(), Err(Error::ConfigInvalid(_))));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let doc = config(37);
    let ma = run_pipeline_with(&doc, &PipelineOptions::new(a.path())).unwrap();
    run_pipeline_with(&doc, &PipelineOptions::new(b.path())).unwrap();
    for path in ma.outputs.values() {
        let name = path.file_name().unwrap();
        assert_eq!(
            fs::read(path).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    fs::write(&path, serde_json::to_string(&config(7)).unwrap()).unwrap();
    let manifest = run_pipeline(&path, &PipelineOptions::new(dir.path().join("out"))).unwrap();
    assert_eq!(manifest.config, config(7));
    assert!(run_pipeline(&dir.path().join("missing.json"), &PipelineOptions::new(dir.path())).is_err());
}

#[test]
fn figure_emitters() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_pipeline_with(&config(19), &PipelineOptions::new(dir.path())).unwrap();
    let figs = dir.path().join("figs");
    fs::create_dir_all(&figs).unwrap();

    let fig1 = emit_figure_data(&manifest, "fig1", &figs).unwrap();
    assert_eq!(fig1.len(), 3);
    for id in ["fig2", "fig3", "fig5", "fig6", "fig7", "fig8"] {
        let files = emit_figure_data(&manifest, id, &figs).unwrap();
        assert!(!files.is_empty(), "{id}");
        assert!(files.iter().all(|f| f.exists()), "{id}");
    }
    assert!(matches!(
        emit_figure_data(&manifest, "fig9", &figs),
        Err(Error::UnknownFigure(_))
    ));

    // once the crystal is gone the downstream figures cannot be built
    fs::remove_file(manifest.output("crystal").unwrap()).unwrap();
    assert!(matches!(
        emit_figure_data(&manifest, "fig2", &figs),
        Err(Error::MissingUpstream(_))
    ));
}
