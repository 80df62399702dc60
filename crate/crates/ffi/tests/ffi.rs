use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use omog::bank::ModelBank;
use omog::eval::pretrain_bank;
use omog::fuse::{encode_nodes, fuse_models, relevance_scores, sample_nodes, select_and_weight, Strategy, RELEVANCE_SAMPLE};
use omog::pretrain::TrainConfig;
use omog::propagate::hop_stack;
use omog::similarity::cosine;
use omog::synthetic::DomainSuiteSpec;
use omog::GraphDataset;
use omog_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    bank_dir: CString,
    ds_dir: CString,
    bank: ModelBank,
    test: GraphDataset,
}

fn fixture() -> Fixture {
    let spec = DomainSuiteSpec {
        n: 120,
        d: 8,
        num_classes: 3,
        seed: 5,
        ..DomainSuiteSpec::default()
    };
    let mut datasets = spec.generate().unwrap();
    let test = datasets.pop().unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let bank = pretrain_bank(&datasets, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bank_path = dir.path().join("bank");
    let ds_path = dir.path().join("test");
    bank.save(&bank_path).unwrap();
    test.save(&ds_path).unwrap();
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    Fixture {
        bank_dir: c(&bank_path),
        ds_dir: c(&ds_path),
        _dir: dir,
        bank,
        test,
    }
}

struct Handles {
    bank: *mut OmogBank,
    ds: *mut OmogDataset,
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            omog_bank_free(self.bank);
            omog_dataset_free(self.ds);
        }
    }
}

fn open(f: &Fixture) -> Handles {
    let mut h = Handles {
        bank: ptr::null_mut(),
        ds: ptr::null_mut(),
    };
    unsafe {
        assert_eq!(omog_bank_load(f.bank_dir.as_ptr(), &mut h.bank), OmogStatus::Ok);
        assert_eq!(omog_dataset_load(f.ds_dir.as_ptr(), &mut h.ds), OmogStatus::Ok);
    }
    h
}

fn last_error() -> String {
    let p = omog_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn handles_expose_shapes_and_names() {
    let f = fixture();
    let h = open(&f);
    let (mut n, mut d, mut c) = (0, 0, 0);
    unsafe {
        assert_eq!(omog_dataset_shape(h.ds, &mut n, &mut d, &mut c), OmogStatus::Ok);
        assert_eq!((n, d, c), (120, 8, 3));
        assert_eq!(omog_bank_len(h.bank), f.bank.len());
        for (i, name) in f.bank.names().iter().enumerate() {
            assert_eq!(CStr::from_ptr(omog_bank_entry_name(h.bank, i)).to_str().unwrap(), *name);
        }
        assert!(omog_bank_entry_name(h.bank, f.bank.len()).is_null());
        assert_eq!(omog_bank_len(ptr::null()), 0);
    }
    assert!(omog_last_error().is_null());
    let v = unsafe { CStr::from_ptr(omog_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn relevance_matches_library() {
    let f = fixture();
    let h = open(&f);
    let mut out = vec![0.0; f.bank.len()];
    let status = unsafe { omog_relevance(h.bank, h.ds, 9, out.as_mut_ptr(), out.len()) };
    assert_eq!(status, OmogStatus::Ok);
    let hops = hop_stack(&f.test, f.bank.shape().unwrap().1).unwrap();
    let sample = sample_nodes(f.test.n(), RELEVANCE_SAMPLE, 9);
    let want = relevance_scores(&f.bank, &hops, Some(&sample)).unwrap();
    assert_eq!(out, want.0);
}

#[test]
fn inference_matches_independent_scoring() {
    let f = fixture();
    let h = open(&f);
    let params = OmogFusionParams {
        k: 2,
        strategy: OmogStrategy::TopK,
        temperature: 0.5,
        seed: 3,
        allow_self: false,
    };
    let mut pred = vec![u32::MAX; f.test.n()];
    let status = unsafe { omog_infer_nc(h.bank, h.ds, &params, pred.as_mut_ptr(), pred.len()) };
    assert_eq!(status, OmogStatus::Ok, "{}", last_error());

    let hops = hop_stack(&f.test, f.bank.shape().unwrap().1).unwrap();
    let sample = sample_nodes(f.test.n(), RELEVANCE_SAMPLE, 3);
    let scores = relevance_scores(&f.bank, &hops, Some(&sample)).unwrap();
    let w = select_and_weight(&scores, 2, Strategy::TopK, 0.5, 3).unwrap();
    let fused = fuse_models(&f.bank, &w).unwrap();
    let nodes: Vec<usize> = (0..f.test.n()).collect();
    let emb = encode_nodes(&fused.source, &hops, &nodes).unwrap();
    let labels = f.test.label_embeddings.as_ref().unwrap();
    for (i, row) in emb.outer_iter().enumerate() {
        let sims: Vec<f64> = labels.outer_iter().map(|l| cosine(row, l)).collect();
        let best = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = sims.iter().position(|&s| s == best).unwrap() as u32;
        assert_eq!(pred[i], first, "node {i}");
    }

    let pairs = [0usize, 1, 5, 7, 7, 5, 3, 3];
    let mut lp = vec![0.0; 4];
    let status = unsafe { omog_score_pairs(h.bank, h.ds, &params, pairs.as_ptr(), 4, lp.as_mut_ptr(), lp.len()) };
    assert_eq!(status, OmogStatus::Ok);
    for (j, p) in pairs.chunks(2).enumerate() {
        let want = cosine(emb.row(p[0]), emb.row(p[1]));
        assert!((lp[j] - want).abs() < 1e-12, "pair {j}: {} vs {want}", lp[j]);
    }
    assert_eq!(lp[1], lp[2]);
}

#[test]
fn null_params_use_defaults() {
    let f = fixture();
    let h = open(&f);
    let n = f.test.n();
    let (mut a, mut b) = (vec![0u32; n], vec![0u32; n]);
    let defaults = omog_fusion_params_default();
    unsafe {
        assert_eq!(omog_infer_nc(h.bank, h.ds, ptr::null(), a.as_mut_ptr(), n), OmogStatus::Ok);
        assert_eq!(omog_infer_nc(h.bank, h.ds, &defaults, b.as_mut_ptr(), n), OmogStatus::Ok);
    }
    assert_eq!(a, b);
}

#[test]
fn errors_are_reported_with_codes() {
    let f = fixture();
    let h = open(&f);
    let mut bank = ptr::null_mut();
    let missing = CString::new("/nonexistent/omog/dataset").unwrap();
    let mut ds = ptr::null_mut();
    unsafe {
        assert_eq!(omog_dataset_load(missing.as_ptr(), &mut ds), OmogStatus::NotFound);
        assert!(ds.is_null());
        assert!(last_error().contains("/nonexistent/omog/dataset"));

        assert_eq!(omog_bank_load(ptr::null(), &mut bank), OmogStatus::NullPointer);
        assert_eq!(omog_dataset_load(f.ds_dir.as_ptr(), ptr::null_mut()), OmogStatus::NullPointer);

        let mut short = vec![0.0; f.bank.len() - 1];
        let s = omog_relevance(h.bank, h.ds, 0, short.as_mut_ptr(), short.len());
        assert_eq!(s, OmogStatus::BufferTooSmall);
        assert!(last_error().contains("needed"));

        let bad = [0usize, 10_000];
        let mut out = [0.0];
        let s = omog_score_pairs(h.bank, h.ds, ptr::null(), bad.as_ptr(), 1, out.as_mut_ptr(), 1);
        assert_eq!(s, OmogStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut params = omog_fusion_params_default();
        params.k = 0;
        let mut pred = vec![0u32; f.test.n()];
        let s = omog_infer_nc(h.bank, h.ds, &params, pred.as_mut_ptr(), pred.len());
        assert_eq!(s, OmogStatus::InvalidArgument);

        // A successful call clears the previous message.
        let mut rel = vec![0.0; f.bank.len()];
        assert_eq!(omog_relevance(h.bank, h.ds, 0, rel.as_mut_ptr(), rel.len()), OmogStatus::Ok);
        assert!(omog_last_error().is_null());

        omog_bank_free(ptr::null_mut());
        omog_dataset_free(ptr::null_mut());
    }
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/omog.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "omog_dataset_load",
        "omog_bank_load",
        "omog_relevance",
        "omog_infer_nc",
        "omog_score_pairs",
        "omog_last_error",
        "OMOG_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler available, syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
