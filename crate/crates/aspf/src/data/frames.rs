//! Frame enumeration for image directories.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One frame of a source: its position in the full sequence plus the file
/// backing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub path: PathBuf,
}

/// Lists every stride-th frame of an image directory in lexicographic name
/// order. Indices refer to positions before striding, so stride 5 over 12
/// frames yields indices 0, 5, 10. Files that are not .ppm/.pgm are ignored.
pub fn extract_frames(source: impl AsRef<Path>, stride: usize) -> Result<Vec<Frame>> {
    let source = source.as_ref();
    if stride == 0 {
        return Err(Error::InvalidArg {
            op: "extract_frames",
            detail: "stride must be at least 1".to_string(),
        });
    }
    let iter = std::fs::read_dir(source).map_err(|e| Error::io(source, e))?;
    let mut names = Vec::new();
    for entry in iter {
        let entry = entry.map_err(|e| Error::io(source, e))?;
        let path = entry.path();
        let is_frame = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("pgm"));
        if is_frame && path.is_file() {
            names.push(path);
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyInput {
            what: format!("no frames in {}", source.display()),
        });
    }
    names.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(names
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0)
        .map(|(index, path)| Frame { index, path })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::img::Image;

    fn frame_dir(name: &str, count: usize) -> PathBuf {
        let dir = std::env::temp_dir().join("aspf-frames-tests").join(name);
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        for i in 0..count {
            let img = Image::new(2, 2, 1, vec![i as u8; 4]).unwrap();
            img.write(dir.join(format!("f{i:03}.pgm"))).unwrap();
        }
        dir
    }

    #[test]
    fn stride_one_lists_all_in_name_order() {
        let dir = frame_dir("all", 10);
        let frames = extract_frames(&dir, 1).unwrap();
        assert_eq!(frames.len(), 10);
        for (i, f) in frames.iter().enumerate() {
            assert_eq!(f.index, i);
            assert_eq!(f.path.file_name().unwrap().to_str().unwrap(), format!("f{i:03}.pgm"));
        }
    }

    #[test]
    fn stride_five_keeps_every_fifth() {
        let dir = frame_dir("stride", 12);
        let frames = extract_frames(&dir, 5).unwrap();
        let indices: Vec<usize> = frames.iter().map(|f| f.index).collect();
        assert_eq!(indices, vec![0, 5, 10]);
    }

    #[test]
    fn non_frame_files_are_ignored() {
        let dir = frame_dir("mixed", 3);
        std::fs::write(dir.join("notes.txt"), "x").unwrap();
        assert_eq!(extract_frames(&dir, 1).unwrap().len(), 3);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = std::env::temp_dir().join("aspf-frames-tests").join("empty");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let err = extract_frames(&dir, 1).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { .. }), "{err}");
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = std::env::temp_dir().join("aspf-frames-tests").join("nope");
        let _ = std::fs::remove_dir_all(&dir);
        assert!(matches!(extract_frames(&dir, 1), Err(Error::Io { .. })));
    }

    #[test]
    fn zero_stride_rejected() {
        let dir = frame_dir("zstride", 2);
        assert!(matches!(
            extract_frames(&dir, 0),
            Err(Error::InvalidArg { .. })
        ));
    }
}
