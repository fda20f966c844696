//! Ordered lists of dataset files.

use std::path::{Path, PathBuf};

use glob::{MatchOptions, Pattern};
use serde::Serialize;
use walkdir::WalkDir;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest root, `/`-separated.
    pub path: String,
    /// Label file relative to the label root, when one was attached.
    pub label: Option<String>,
}

impl ManifestEntry {
    /// File name without directory or extension.
    pub fn stem(&self) -> &str {
        let name = self.path.rsplit('/').next().unwrap_or(&self.path);
        match name.rfind('.') {
            Some(0) | None => name,
            Some(i) => &name[..i],
        }
    }

    /// Directory part of `path`, empty at the root.
    pub fn parent(&self) -> &str {
        self.path.rfind('/').map_or("", |i| &self.path[..i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub pattern: String,
    pub entries: Vec<ManifestEntry>,
    /// Working size every image is resized to, `None` to keep decoded dims.
    pub dims: Option<(usize, usize)>,
}

/// Lists the files under `root` whose relative path matches `pattern`,
/// sorted by relative path. `*` does not cross `/`; use `**/` for that.
pub fn build_manifest(root: &Path, pattern: &str) -> Result<DatasetManifest> {
    let matcher = Pattern::new(pattern).map_err(|e| Error::Usage(format!("bad pattern {pattern:?}: {e}")))?;
    let options = MatchOptions { case_sensitive: true, require_literal_separator: true, require_literal_leading_dot: false };
    let meta = std::fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::io(root, std::io::Error::other("not a directory")));
    }
    let mut entries = Vec::new();
    for item in WalkDir::new(root).follow_links(true) {
        let item = item.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !item.file_type().is_file() {
            continue;
        }
        let rel = relative_string(root, item.path());
        if matcher.matches_with(&rel, options) {
            entries.push(ManifestEntry { path: rel, label: None });
        }
    }
    if entries.is_empty() {
        return Err(Error::Usage(format!("no files under {} match {pattern:?}", root.display())));
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetManifest { root: root.to_path_buf(), pattern: pattern.to_string(), entries, dims: None })
}

fn relative_string(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_of(&self, index: usize) -> PathBuf {
        self.root.join(&self.entries[index].path)
    }

    /// Attaches `label_root/<same relative path with extension ext>` to every
    /// entry that has one. Returns how many were found.
    pub fn attach_labels(&mut self, label_root: &Path, ext: &str) -> usize {
        let mut found = 0;
        for e in &mut self.entries {
            let stem = e.stem();
            let parent = e.parent();
            let rel = if parent.is_empty() { format!("{stem}.{ext}") } else { format!("{parent}/{stem}.{ext}") };
            if label_root.join(&rel).is_file() {
                e.label = Some(rel);
                found += 1;
            }
        }
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn touch(root: &Path, rel: &str) {
        let p = root.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, b"").unwrap();
    }

    #[test]
    fn lexicographic_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["b.png", "a.png", "c.jpg", "sub/d.png", "a10.png", "a2.png"] {
            touch(dir.path(), f);
        }
        let m = build_manifest(dir.path(), "*.png").unwrap();
        let names: Vec<&str> = m.entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(names, ["a.png", "a10.png", "a2.png", "b.png"]);
        let deep = build_manifest(dir.path(), "**/*.png").unwrap();
        assert_eq!(deep.len(), 5);
        assert_eq!(deep.entries[4].path, "sub/d.png");
        assert_eq!(deep.entries[4].stem(), "d");
        assert_eq!(deep.entries[4].parent(), "sub");
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "x.txt");
        assert!(matches!(build_manifest(dir.path(), "*.png"), Err(Error::Usage(_))));
        assert!(matches!(build_manifest(&dir.path().join("missing"), "*"), Err(Error::Io { .. })));
        assert!(build_manifest(dir.path(), "[").is_err());
    }

    #[test]
    fn labels_by_stem() {
        let dir = tempfile::tempdir().unwrap();
        touch(dir.path(), "img/a.jpg");
        touch(dir.path(), "img/b.jpg");
        touch(dir.path(), "lbl/a.png");
        let mut m = build_manifest(&dir.path().join("img"), "*.jpg").unwrap();
        assert_eq!(m.attach_labels(&dir.path().join("lbl"), "png"), 1);
        assert_eq!(m.entries[0].label.as_deref(), Some("a.png"));
        assert_eq!(m.entries[1].label, None);
    }
}
