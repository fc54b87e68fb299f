//! On-disk stage artifacts.
//!
//! Text artifacts start with `# docvec-artifact\t<kind>\t<fingerprint>`;
//! DV exports and checkpoints carry the fingerprint in their own headers.
//! A stage records completion in `stamps/<stage>` holding its fingerprint.

use std::fs;
use std::path::{Path, PathBuf};

use crate::numerics::{Checkpoint, Real};
use crate::vectors::{read_dv_export, write_dv_export, DvRecord};
use crate::{Error, Result};

const HEADER: &str = "# docvec-artifact";

/// Writes through a temporary sibling so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_existing(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_fingerprint(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::FingerprintMismatch {
            path: path.to_owned(),
            found: found.to_owned(),
            expected: expected.to_owned(),
        });
    }
    Ok(())
}

pub fn write_text(path: &Path, kind: &str, fingerprint: &str, body: &str) -> Result<()> {
    let text = format!("{HEADER}\t{kind}\t{fingerprint}\n{body}");
    write_atomic(path, text.as_bytes())
}

/// Body of a text artifact, checking its kind and fingerprint.
pub fn read_text(path: &Path, kind: &str, fingerprint: &str) -> Result<String> {
    let text = read_existing(path)?;
    let (head, body) = text.split_once('\n').unwrap_or((&text, ""));
    let mut parts = head.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(HEADER), Some(k), Some(fp)) if k == kind => {
            check_fingerprint(path, fp, fingerprint)?;
            Ok(body.to_owned())
        }
        _ => Err(Error::format("artifact", format!("{} is not a `{kind}` artifact", path.display()))),
    }
}

pub fn write_dv(path: &Path, fingerprint: &str, records: &[DvRecord]) -> Result<()> {
    write_atomic(path, write_dv_export(fingerprint, records).as_bytes())
}

pub fn read_dv(path: &Path, fingerprint: &str) -> Result<Vec<DvRecord>> {
    let (found, records) = read_dv_export(&read_existing(path)?)?;
    check_fingerprint(path, &found, fingerprint)?;
    Ok(records)
}

pub fn write_checkpoint<T: Real>(path: &Path, fingerprint: &str, mut ck: Checkpoint<T>) -> Result<()> {
    ck.meta.insert("fingerprint".into(), fingerprint.into());
    write_atomic(path, &ck.to_bytes())
}

pub fn read_checkpoint<T: Real>(path: &Path, fingerprint: &str) -> Result<Checkpoint<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_owned()));
    }
    let ck = Checkpoint::<T>::load(path)?;
    let found = ck.meta.get("fingerprint").map(String::as_str).unwrap_or("");
    check_fingerprint(path, found, fingerprint)?;
    Ok(ck)
}

/// State of a stage's completion stamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StampStatus {
    Missing,
    Current,
    Stale(String),
}

pub fn stamp_path(out: &Path, stage: &str) -> PathBuf {
    out.join("stamps").join(stage)
}

pub fn stamp_status(out: &Path, stage: &str, fingerprint: &str) -> Result<StampStatus> {
    let path = stamp_path(out, stage);
    if !path.exists() {
        return Ok(StampStatus::Missing);
    }
    let found = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let found = found.trim();
    Ok(if found == fingerprint {
        StampStatus::Current
    } else {
        StampStatus::Stale(found.to_owned())
    })
}

pub fn write_stamp(out: &Path, stage: &str, fingerprint: &str) -> Result<()> {
    write_atomic(&stamp_path(out, stage), format!("{fingerprint}\n").as_bytes())
}

pub fn remove_stamp(out: &Path, stage: &str) -> Result<()> {
    let path = stamp_path(out, stage);
    match fs::remove_file(&path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(&path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_artifact_checks_kind_and_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        assert!(matches!(read_text(&p, "k", "f"), Err(Error::MissingArtifact(_))));
        write_text(&p, "k", "f1", "body\n").unwrap();
        assert_eq!(read_text(&p, "k", "f1").unwrap(), "body\n");
        assert!(matches!(read_text(&p, "k", "f2"), Err(Error::FingerprintMismatch { .. })));
        assert!(read_text(&p, "other", "f1").is_err());
    }

    #[test]
    fn stamps() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(stamp_status(dir.path(), "s", "a").unwrap(), StampStatus::Missing);
        write_stamp(dir.path(), "s", "a").unwrap();
        assert_eq!(stamp_status(dir.path(), "s", "a").unwrap(), StampStatus::Current);
        assert_eq!(stamp_status(dir.path(), "s", "b").unwrap(), StampStatus::Stale("a".into()));
        remove_stamp(dir.path(), "s").unwrap();
        assert_eq!(stamp_status(dir.path(), "s", "a").unwrap(), StampStatus::Missing);
    }
}
