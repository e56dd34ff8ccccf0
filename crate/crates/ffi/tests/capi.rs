use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use candle_core::{DType, Device};
use gait_vlm::caption_decoder::value_to_token;
use gait_vlm::caption_decoder::vocab::half_step;
use gait_vlm::param_corpus::NORM_RANGE;
use gait_vlm::encoders::Tokenizer;
use gait_vlm::harness::{ExperimentConfig, GaitModel};
use gait_vlm::video_branch::FrameSequence;
use gait_vlm_ffi::*;

fn last_error() -> String {
    let p = gv_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn noise_frames(frames: usize, side: usize) -> Vec<u8> {
    (0..frames * side * side).map(|i| ((i * 2654435761) >> 7) as u8).collect()
}

#[test]
fn model_round_trip_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::default();
    let model = GaitModel::build(&config, DType::F32, &Device::Cpu).unwrap();
    model.save(dir.path()).unwrap();

    let side = config.encoders.vision.image_size;
    let pixels = noise_frames(70, side);
    let video = FrameSequence::new(pixels.clone(), 70, side, side, 1).unwrap();
    let expected = model.classify_video(&video).unwrap();

    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle: *mut GvModel = ptr::null_mut();
    unsafe {
        assert_eq!(gv_model_load(path.as_ptr(), &mut handle), GvStatus::Ok);
        assert!(!handle.is_null());
        let k = gv_model_num_classes(handle);
        assert_eq!(k, model.num_classes());
        for (i, name) in model.class_names().iter().enumerate() {
            assert_eq!(CStr::from_ptr(gv_model_class_name(handle, i)).to_str().unwrap(), name);
        }
        assert!(gv_model_class_name(handle, k).is_null());

        let mut probs = vec![0.0f64; k];
        let mut class = usize::MAX;
        let status = gv_model_classify(handle, pixels.as_ptr(), 70, side, side, 1, probs.as_mut_ptr(), k, &mut class);
        assert_eq!(status, GvStatus::Ok);
        assert_eq!(class, expected.class);
        for (a, b) in probs.iter().zip(&expected.probabilities) {
            assert!((a - b).abs() < 1e-9);
        }

        let mut short = vec![0.0f64; k - 1];
        let status = gv_model_classify(handle, pixels.as_ptr(), 70, side, side, 1, short.as_mut_ptr(), k - 1, &mut class);
        assert_eq!(status, GvStatus::BufferTooSmall);

        let status = gv_model_classify(handle, pixels.as_ptr(), 70, side, side, 3, probs.as_mut_ptr(), k, &mut class);
        assert_ne!(status, GvStatus::Ok);
        assert!(!last_error().is_empty());

        gv_model_free(handle);
    }
}

#[test]
fn load_errors_are_reported() {
    let missing = CString::new("/nonexistent/checkpoint").unwrap();
    let mut handle: *mut GvModel = ptr::null_mut();
    unsafe {
        assert_eq!(gv_model_load(missing.as_ptr(), &mut handle), GvStatus::Io);
        assert!(handle.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(gv_model_load(ptr::null(), &mut handle), GvStatus::NullPointer);
        assert_eq!(gv_model_load(missing.as_ptr(), ptr::null_mut()), GvStatus::NullPointer);
        gv_model_free(ptr::null_mut());
        assert_eq!(gv_model_num_classes(ptr::null()), 0);
    }
}

#[test]
fn number_tokens_match_library() {
    let mut tok = 0u32;
    let mut back = 0.0f64;
    unsafe {
        for v in [-NORM_RANGE, -1.3, 0.0, 0.77, NORM_RANGE] {
            assert_eq!(gv_value_to_token(v, &mut tok), GvStatus::Ok);
            assert_eq!(tok, value_to_token(v).unwrap());
            assert_eq!(gv_token_to_value(tok, &mut back), GvStatus::Ok);
            assert!((back - v).abs() <= half_step() + 1e-12);
        }
        assert_eq!(gv_value_to_token(f64::NAN, &mut tok), GvStatus::Invalid);
        assert_eq!(gv_token_to_value(17, &mut back), GvStatus::OutOfRange);
    }
}

#[test]
fn tokenize_reports_required_length() {
    let text = CString::new("the walking speed is slow").unwrap();
    let expected = Tokenizer::new().tokenize("the walking speed is slow");
    let mut len = 0usize;
    unsafe {
        assert_eq!(gv_tokenize(text.as_ptr(), ptr::null_mut(), 0, &mut len), GvStatus::BufferTooSmall);
        assert_eq!(len, expected.len());
        let mut ids = vec![0u32; len];
        assert_eq!(gv_tokenize(text.as_ptr(), ids.as_mut_ptr(), len, &mut len), GvStatus::Ok);
        assert_eq!(ids, expected);
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            gv_tokenize(bad.as_ptr().cast(), ids.as_mut_ptr(), len, &mut len),
            GvStatus::InvalidUtf8
        );
    }
}

#[test]
fn status_names_are_static() {
    let name = unsafe { CStr::from_ptr(gv_status_name(GvStatus::BufferTooSmall)) };
    assert_eq!(name.to_str().unwrap(), "buffer too small");
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gait_vlm.h");
    assert!(header.exists());
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["gv_model_load", "gv_model_classify", "gv_model_free", "gv_last_error", "gv_tokenize"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ GvModel *m = 0; return gv_model_load(\"x\", &m) == GV_STATUS_OK; }}\n",
            header.display()
        ),
    )
    .unwrap();
    match Command::new("cc").args(["-std=c99", "-fsyntax-only", "-Wall", "-Werror"]).arg(&src).status() {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler available, skipping syntax check"),
    }
}
