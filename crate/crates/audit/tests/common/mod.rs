//! Synthetic corpus plus mock backend in a temporary directory.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use disco_audit::run::RunConfig;
use disco_audit::synth::{self, Recalls, SynthSpec};
use disco_core::detectors::DetectorKind;
use disco_core::mock::MockProfile;
use disco_core::query::Capability;

pub const BACKEND: &str = "mock";

pub struct Env {
    pub dir: tempfile::TempDir,
    pub manifest: PathBuf,
    pub backends: PathBuf,
    pub spec: SynthSpec,
}

impl Env {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self, detectors: &[DetectorKind]) -> RunConfig {
        let mut c = RunConfig::new(&self.manifest, &self.backends, BACKEND);
        c.detectors = detectors.to_vec();
        c
    }
}

pub const RECALLS: Recalls = Recalls {
    suspect_main: 0.7,
    suspect_neutral: 0.34,
    clean: 0.002,
    suspect_caption: 0.15,
    clean_caption: 0.002,
};

pub fn env_with(spec: SynthSpec, profile: impl FnOnce(&SynthSpec) -> MockProfile, caps: &[Capability], max_images: usize) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth::write_corpus(&dir.path().join("corpus"), &spec).unwrap();
    let profile = profile(&spec);
    let backends = synth::write_mock_backend(&dir.path().join("config"), BACKEND, &profile, caps, max_images).unwrap();
    Env {
        dir,
        manifest,
        backends,
        spec,
    }
}

pub fn env(spec: SynthSpec, recalls: Recalls) -> Env {
    let seed = spec.seed;
    env_with(
        spec,
        |s| synth::mock_profile(seed, &s.genres, recalls),
        &[Capability::Freeform, Capability::Logits, Capability::MultiImage],
        4,
    )
}

pub fn small(seed: u64) -> SynthSpec {
    SynthSpec {
        n_suspect: 6,
        n_clean: 6,
        n_main: 4,
        n_neutral: 2,
        seed,
        ..SynthSpec::default()
    }
}

/// All regular files under `dir` except the response cache, relative path → bytes.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                if p.file_name().unwrap() != "cache" {
                    walk(root, &p, out);
                }
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
