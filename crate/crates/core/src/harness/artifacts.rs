use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{DynamicsDemo, HarnessError, ScenarioOutcome, SuiteOutcome};

/// Creates `out/<name>_<timestamp>`, adding `-1`, `-2`, … if it already exists.
pub fn create_run_dir(out: &Path, name: &str, timestamp: &str) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let stem = format!("{name}_{timestamp}");
    let mut dir = out.join(&stem);
    let mut n = 0;
    while dir.exists() {
        n += 1;
        dir = out.join(format!("{stem}-{n}"));
    }
    fs::create_dir(&dir).map_err(HarnessError::io(&dir))?;
    Ok(dir)
}

struct Writer<'a> {
    root: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(root: &'a Path) -> Self {
        Writer {
            root,
            files: Vec::new(),
        }
    }

    fn put<F>(&mut self, rel: impl AsRef<Path>, fill: F) -> Result<(), HarnessError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
        }
        let file = File::create(&path).map_err(HarnessError::io(&path))?;
        let mut w = BufWriter::new(file);
        fill(&mut w)
            .and_then(|_| w.flush())
            .map_err(HarnessError::io(&path))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }

    fn text(&mut self, rel: impl AsRef<Path>, text: &str) -> Result<(), HarnessError> {
        self.put(rel, |w| w.write_all(text.as_bytes()))
    }
}

/// Writes one scenario's traces, spectra and reports under `dir`; returns
/// the paths written, relative to `dir`.
pub fn write_scenario_artifacts(
    outcome: &ScenarioOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut w = Writer::new(dir);
    w.text("config.toml", &outcome.config.to_toml())?;
    w.put("traces/pd.ocat", |f| outcome.pd_trace.write_binary(f))?;
    if let Some(d) = &outcome.demod {
        w.put("traces/demod_x.ocat", |f| d.x.write_binary(f))?;
        w.put("traces/demod_y.ocat", |f| d.y.write_binary(f))?;
        if outcome.config.output.demod_csv {
            w.put("traces/demod.csv", |f| d.write_csv(f))?;
        }
    }
    if let Some(p) = &outcome.direct {
        w.put("spectra/direct.csv", |f| p.spectrum.write_csv(f))?;
    }
    if let Some(p) = &outcome.oca {
        w.put("spectra/oca.csv", |f| p.spectrum.write_csv(f))?;
    }
    if let Some(s) = &outcome.predicted_demod {
        w.put("spectra/predicted_demod.csv", |f| s.write_csv(f))?;
    }
    w.text("report.txt", &outcome.summary())?;
    w.text("report.csv", &outcome.report_csv())?;
    Ok(w.files)
}

pub fn write_suite_artifacts(
    suite: &SuiteOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut w = Writer::new(dir);
    w.text("comparison.csv", &suite.report.to_csv())?;
    w.text("comparison.txt", &suite.report.to_text())?;
    let mut files = w.files;
    for s in &suite.scenarios {
        let sub = PathBuf::from(&s.config.scenario_name);
        for f in write_scenario_artifacts(s, &dir.join(&sub))? {
            files.push(sub.join(f));
        }
    }
    Ok(files)
}

pub fn write_demo_artifacts(demo: &DynamicsDemo, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut w = Writer::new(dir);
    w.put("traces/trajectory.csv", |f| demo.trajectory.write_csv(f))?;
    w.text("summary.txt", &demo.summary())?;
    Ok(w.files)
}

/// Writes `index.txt`: one relative path per line, sorted, `/`-separated.
pub fn write_index(dir: &Path, files: &[PathBuf]) -> Result<PathBuf, HarnessError> {
    let mut lines: Vec<String> = files
        .iter()
        .map(|p| {
            p.components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect();
    lines.sort();
    let path = dir.join("index.txt");
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(HarnessError::io(&path))?;
    Ok(path)
}
