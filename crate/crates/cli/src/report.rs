//! Report files. Each invocation gets its own `run-NNN` directory.

use std::fmt::Write as _;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use cenn_forge::{CeNNProgram, Inference};
use serde::Serialize;

use crate::{CliError, CliResult};

/// Creates `root/run-NNN` with the next unused number.
pub fn new_run_dir(root: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let mut next = 1 + existing_runs(root)?.into_iter().max().unwrap_or(0);
    loop {
        let dir = root.join(format!("run-{next:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            // another process took it
            Err(e) if e.kind() == ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(CliError::io(&dir, e)),
        }
    }
}

fn existing_runs(root: &Path) -> CliResult<Vec<u32>> {
    let entries = fs::read_dir(root).map_err(|e| CliError::io(root, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(root, e))?;
        if let Some(n) = entry.file_name().to_str().and_then(|s| s.strip_prefix("run-")).and_then(|s| s.parse().ok()) {
            ids.push(n);
        }
    }
    Ok(ids)
}

/// Writes a new file; an existing file is an error, never overwritten.
pub fn write_new(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    use std::io::Write;
    let path = dir.join(name);
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| CliError::io(&path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("report metadata serializes")
}

/// `index,label,predicted,correct,score_0,...`
pub fn predictions_csv(labels: &[usize], results: &[Inference], classes: usize) -> String {
    let mut s = String::from("index,label,predicted,correct");
    for k in 0..classes {
        let _ = write!(s, ",score_{k}");
    }
    s.push('\n');
    for (i, (label, inf)) in labels.iter().zip(results).enumerate() {
        let _ = write!(s, "{i},{label},{},{}", inf.predicted, u8::from(inf.predicted == *label));
        for v in &inf.scores {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

pub const TRACE_SUMMARY_HEADER: &str =
    "layer,kind,phases,template_apply,accumulate,sram_read,mem_read,mem_write,adc_convert,digital_fc";

/// Per-layer event counts of a compiled program.
pub fn trace_summary_csv(prog: &CeNNProgram) -> String {
    let mut s = format!("{TRACE_SUMMARY_HEADER}\n");
    for (i, l) in prog.layers.iter().enumerate() {
        let c = prog.layer_counts(i);
        let kind = l.kind.map_or("readout".to_string(), |k| format!("{k:?}").to_lowercase());
        let _ = writeln!(
            s,
            "{},{kind},{},{},{},{},{},{},{},{}",
            l.name,
            prog.layer_phases(i),
            c.template_apply,
            c.accumulate,
            c.sram_read,
            c.mem_read,
            c.mem_write,
            c.adc_convert,
            c.digital_fc
        );
    }
    let c = prog.counts();
    let _ = writeln!(
        s,
        "total,,{},{},{},{},{},{},{},{}",
        prog.phases, c.template_apply, c.accumulate, c.sram_read, c.mem_read, c.mem_write, c.adc_convert, c.digital_fc
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_count_up_past_gaps() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(new_run_dir(tmp.path()).unwrap().ends_with("run-001"));
        fs::create_dir(tmp.path().join("run-007")).unwrap();
        fs::create_dir(tmp.path().join("notes")).unwrap();
        assert!(new_run_dir(tmp.path()).unwrap().ends_with("run-008"));
    }

    #[test]
    fn existing_files_are_not_overwritten() {
        let tmp = tempfile::tempdir().unwrap();
        write_new(tmp.path(), "a.csv", "x").unwrap();
        assert!(write_new(tmp.path(), "a.csv", "y").is_err());
        assert_eq!(fs::read_to_string(tmp.path().join("a.csv")).unwrap(), "x");
    }
}
