//! Pluggable face detection and the crop-or-reject step.

use std::path::Path;

use crate::error::{Error, Result};
use crate::img::Image;

use super::frames::Frame;

/// Axis-aligned face box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub confidence: f32,
}

impl FaceBox {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    fn check(&self, frame: &Image) -> std::result::Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err(format!("degenerate box {}x{}", self.width, self.height));
        }
        if self.x + self.width > frame.width || self.y + self.height > frame.height {
            return Err(format!(
                "box {}x{}+{}+{} exceeds frame {}x{}",
                self.width, self.height, self.x, self.y, frame.width, frame.height
            ));
        }
        if !self.confidence.is_finite() || !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        Ok(())
    }
}

/// Detector contract: return every face box found in the frame. Failures are
/// reported as strings; the pipeline attaches the frame index.
pub trait FaceDetector {
    fn detect(&self, frame: &Image) -> std::result::Result<Vec<FaceBox>, String>;
}

/// Deterministic detector for tests and offline runs: one box covering the
/// central 60% of the frame, confidence 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubDetector;

impl FaceDetector for StubDetector {
    fn detect(&self, frame: &Image) -> std::result::Result<Vec<FaceBox>, String> {
        let width = (frame.width * 3 / 5).max(1);
        let height = (frame.height * 3 / 5).max(1);
        Ok(vec![FaceBox {
            x: (frame.width - width) / 2,
            y: (frame.height - height) / 2,
            width,
            height,
            confidence: 1.0,
        }])
    }
}

/// What to do when a frame holds more than one face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropPolicy {
    /// Keep the maximal-area box.
    LargestOnly,
    /// Drop the frame; multiple faces in a capture mean contamination.
    RejectMulti,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NoFace,
    MultipleFaces,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NoFace => "no_face",
            RejectReason::MultipleFaces => "multiple_faces",
        }
    }
}

/// Result of pushing one frame through detection: a resized crop or a reason
/// it was dropped.
#[derive(Debug, Clone, PartialEq)]
pub enum CropOutcome {
    Crop(Image),
    Rejected(RejectReason),
}

/// One dropped frame, keyed for the rejection report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub source: String,
    pub frame_index: usize,
    pub reason: RejectReason,
}

/// Runs the detector on one frame and crops per policy. `out_size` is
/// (height, width). Detector failures and out-of-bounds boxes surface as
/// detector errors carrying the frame index.
pub fn detect_and_crop(
    frame: &Image,
    frame_index: usize,
    detector: &dyn FaceDetector,
    policy: CropPolicy,
    out_size: (usize, usize),
) -> Result<CropOutcome> {
    let (out_h, out_w) = out_size;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArg {
            op: "detect_and_crop",
            detail: format!("out_size {out_h}x{out_w}"),
        });
    }
    let boxes = detector
        .detect(frame)
        .map_err(|detail| Error::Detector { frame_index, detail })?;
    for b in &boxes {
        b.check(frame)
            .map_err(|detail| Error::Detector { frame_index, detail })?;
    }
    let chosen = match (boxes.len(), policy) {
        (0, _) => return Ok(CropOutcome::Rejected(RejectReason::NoFace)),
        (1, _) => boxes[0],
        (_, CropPolicy::RejectMulti) => {
            return Ok(CropOutcome::Rejected(RejectReason::MultipleFaces))
        }
        // ties keep the first box the detector reported
        (_, CropPolicy::LargestOnly) => *boxes
            .iter()
            .reduce(|best, b| if b.area() > best.area() { b } else { best })
            .expect("nonempty"),
    };
    let crop = crop_region(frame, chosen)?;
    Ok(CropOutcome::Crop(crop.resize_bilinear(out_w, out_h)?))
}

fn crop_region(frame: &Image, b: FaceBox) -> Result<Image> {
    let c = frame.channels;
    let mut data = Vec::with_capacity(b.width * b.height * c);
    for y in b.y..b.y + b.height {
        let start = (y * frame.width + b.x) * c;
        data.extend_from_slice(&frame.data[start..start + b.width * c]);
    }
    Image::new(b.width, b.height, c, data)
}

/// Outcome tally for one prepared source. Every frame lands on exactly one
/// side: frames_seen == crops_written + rejections.len().
#[derive(Debug, Default)]
pub struct PrepReport {
    pub frames_seen: usize,
    pub crops_written: usize,
    pub rejections: Vec<Rejection>,
}

/// Crops every frame of one source into `out_dir`, named
/// `<source>_<index:06>.<ppm|pgm>` so manifests can recover provenance.
pub fn prep_frames(
    frames: &[Frame],
    source: &str,
    detector: &dyn FaceDetector,
    policy: CropPolicy,
    out_size: (usize, usize),
    out_dir: &Path,
) -> Result<PrepReport> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut report = PrepReport::default();
    for frame in frames {
        report.frames_seen += 1;
        let image = Image::read(&frame.path)?;
        match detect_and_crop(&image, frame.index, detector, policy, out_size)? {
            CropOutcome::Crop(crop) => {
                let ext = if crop.channels == 3 { "ppm" } else { "pgm" };
                crop.write(out_dir.join(format!("{source}_{:06}.{ext}", frame.index)))?;
                report.crops_written += 1;
            }
            CropOutcome::Rejected(reason) => report.rejections.push(Rejection {
                source: source.to_string(),
                frame_index: frame.index,
                reason,
            }),
        }
    }
    Ok(report)
}

/// Writes `source,frame_index,reason` rows. Fields are written verbatim;
/// sources with commas are not escaped.
pub fn write_rejection_csv(path: impl AsRef<Path>, rejections: &[Rejection]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("source,frame_index,reason\n");
    for r in rejections {
        out.push_str(&format!("{},{},{}\n", r.source, r.frame_index, r.reason.as_str()));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedBoxes(Vec<FaceBox>);

    impl FaceDetector for FixedBoxes {
        fn detect(&self, _frame: &Image) -> std::result::Result<Vec<FaceBox>, String> {
            Ok(self.0.clone())
        }
    }

    struct Failing;

    impl FaceDetector for Failing {
        fn detect(&self, _frame: &Image) -> std::result::Result<Vec<FaceBox>, String> {
            Err("backend offline".to_string())
        }
    }

    fn gray_frame(w: usize, h: usize) -> Image {
        Image::new(w, h, 1, vec![50; w * h]).unwrap()
    }

    fn bbox(x: usize, y: usize, w: usize, h: usize) -> FaceBox {
        FaceBox {
            x,
            y,
            width: w,
            height: h,
            confidence: 0.9,
        }
    }

    #[test]
    fn stub_returns_one_crop_of_requested_size() {
        let frame = gray_frame(100, 80);
        let out = detect_and_crop(&frame, 0, &StubDetector, CropPolicy::RejectMulti, (32, 48))
            .unwrap();
        match out {
            CropOutcome::Crop(img) => {
                assert_eq!((img.width, img.height), (48, 32));
            }
            other => panic!("expected a crop, got {other:?}"),
        }
    }

    #[test]
    fn stub_box_covers_central_sixty_percent() {
        let frame = gray_frame(100, 50);
        let boxes = StubDetector.detect(&frame).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!((b.x, b.y, b.width, b.height), (20, 10, 60, 30));
    }

    #[test]
    fn two_boxes_reject_multi_drops_the_frame() {
        let frame = gray_frame(40, 40);
        let det = FixedBoxes(vec![bbox(0, 0, 10, 10), bbox(20, 20, 10, 10)]);
        let out = detect_and_crop(&frame, 3, &det, CropPolicy::RejectMulti, (8, 8)).unwrap();
        assert_eq!(out, CropOutcome::Rejected(RejectReason::MultipleFaces));
    }

    #[test]
    fn largest_only_keeps_the_bigger_box() {
        // areas 100 vs 400; the larger box sits on a distinct gray level
        let mut data = vec![0u8; 40 * 40];
        for y in 20..40 {
            for x in 20..40 {
                data[y * 40 + x] = 200;
            }
        }
        let frame = Image::new(40, 40, 1, data).unwrap();
        let det = FixedBoxes(vec![bbox(0, 0, 10, 10), bbox(20, 20, 20, 20)]);
        let out = detect_and_crop(&frame, 0, &det, CropPolicy::LargestOnly, (4, 4)).unwrap();
        match out {
            CropOutcome::Crop(img) => assert!(img.data.iter().all(|&v| v == 200)),
            other => panic!("expected a crop, got {other:?}"),
        }
    }

    #[test]
    fn no_boxes_is_a_no_face_rejection() {
        let frame = gray_frame(16, 16);
        let out = detect_and_crop(&frame, 0, &FixedBoxes(vec![]), CropPolicy::LargestOnly, (8, 8))
            .unwrap();
        assert_eq!(out, CropOutcome::Rejected(RejectReason::NoFace));
    }

    #[test]
    fn detector_failure_carries_frame_index() {
        let frame = gray_frame(16, 16);
        let err = detect_and_crop(&frame, 7, &Failing, CropPolicy::LargestOnly, (8, 8))
            .unwrap_err();
        match err {
            Error::Detector { frame_index, detail } => {
                assert_eq!(frame_index, 7);
                assert_eq!(detail, "backend offline");
            }
            other => panic!("expected a detector error, got {other}"),
        }
    }

    #[test]
    fn out_of_bounds_box_is_a_detector_error() {
        let frame = gray_frame(16, 16);
        let det = FixedBoxes(vec![bbox(10, 10, 10, 10)]);
        let err = detect_and_crop(&frame, 2, &det, CropPolicy::LargestOnly, (8, 8)).unwrap_err();
        assert!(matches!(err, Error::Detector { frame_index: 2, .. }), "{err}");
    }

    #[test]
    fn crop_slices_the_exact_region() {
        let mut data = vec![0u8; 6 * 6];
        data[2 * 6 + 3] = 9; // (x=3, y=2)
        let frame = Image::new(6, 6, 1, data).unwrap();
        let crop = crop_region(&frame, bbox(3, 2, 2, 2)).unwrap();
        assert_eq!(crop.data, vec![9, 0, 0, 0]);
    }

    #[test]
    fn rejection_csv_format() {
        let dir = std::env::temp_dir().join("aspf-detect-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rej.csv");
        write_rejection_csv(
            &path,
            &[
                Rejection {
                    source: "cam0".to_string(),
                    frame_index: 4,
                    reason: RejectReason::MultipleFaces,
                },
                Rejection {
                    source: "cam1".to_string(),
                    frame_index: 0,
                    reason: RejectReason::NoFace,
                },
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "source,frame_index,reason\ncam0,4,multiple_faces\ncam1,0,no_face\n"
        );
    }
}
