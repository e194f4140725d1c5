//! Subcommands, flag overrides and exit codes of the `hda` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
[model]
image_size = 16
semantic_hidden = [8, 8]
latent_channels = 8
hyper_hidden = 8
digital_channels = 2
analog_hidden = 32
analog_symbols = 64
digital_symbols = 672
denoiser_width = 16
diffusion_steps = 10

[train]
textures = 8
batch_size = 4
learning_rate = 1e-3
stage1_epochs = 1
stage2_epochs = 1
stage3_epochs = 1
denoiser_epochs = 1
denoiser_frames = 8

[link]
cipher_key = "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff"

[eval]
snr_db = [0.0, 10.0]
trials = 1
images = 2
"#;

fn hda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    config: PathBuf,
    checkpoint: PathBuf,
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn trained() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let checkpoint = dir.path().join("tiny.ckpt");
    let log = dir.path().join("log.csv");
    let o = hda(&[
        "train",
        "--config",
        s(&config),
        "--checkpoint",
        s(&checkpoint),
        "--out",
        s(&log),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&checkpoint).unwrap();
    assert_eq!(&bytes[..4], &0x4844_4135u32.to_le_bytes());
    let log = std::fs::read_to_string(log).unwrap();
    assert!(log.starts_with("stage,epoch,loss,rate_bpp\n"));
    assert_eq!(log.lines().count(), 6);
    Fixture {
        _dir: dir,
        config,
        checkpoint,
    }
}

#[test]
fn selftest_passes() {
    let o = hda(&["selftest"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 6);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    assert_eq!(code(&hda(&["sweep-snr", "--checkpoint", s(&missing)])), 3);
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    assert_eq!(code(&hda(&["sweep-snr", "--checkpoint", s(&junk)])), 3);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nimage_size = 17\n").unwrap();
    assert_eq!(
        code(&hda(&[
            "train",
            "--config",
            s(&bad),
            "--checkpoint",
            s(&missing)
        ])),
        2
    );
    assert_eq!(code(&hda(&["train"])), 2);
    assert_eq!(code(&hda(&["sweep-snr", "--denoiser", "loud"])), 2);
}

#[test]
fn evaluation_commands() {
    let f = trained();
    let ck = s(&f.checkpoint);

    // file defaults, then flags overriding them; reruns are bitwise identical
    let a = hda(&["sweep-snr", "--checkpoint", ck, "--config", s(&f.config)]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let rows: Vec<String> = stdout(&a).lines().map(String::from).collect();
    assert_eq!(
        rows[0],
        "snr_db,channel,eta,da_ratio,bpp,psnr_db,ms_ssim,frames_dropped,denoiser,encrypted"
    );
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.0,rician,"));
    assert_eq!(
        stdout(&hda(&[
            "sweep-snr",
            "--checkpoint",
            ck,
            "--config",
            s(&f.config)
        ])),
        stdout(&a)
    );
    let o = hda(&[
        "sweep-snr",
        "--checkpoint",
        ck,
        "--snr",
        "-3,3,9",
        "--channel",
        "awgn",
        "--denoiser",
        "diff",
        "--encrypt",
        "on",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(
        rows[1].starts_with("-3.0,awgn,") && rows[1].ends_with(",diff,true"),
        "{}",
        rows[1]
    );

    // zero trials still write the header
    let csv = f.checkpoint.with_extension("csv");
    assert_eq!(
        code(&hda(&[
            "sweep-snr",
            "--checkpoint",
            ck,
            "--trials",
            "0",
            "--out",
            s(&csv)
        ])),
        0
    );
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1);

    let o = hda(&[
        "security",
        "--checkpoint",
        ck,
        "--snr",
        "10",
        "--trials",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 3);
    for row in out.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        // plain and keyed receivers agree exactly
        assert_eq!(f[5], f[6], "{row}");
    }

    let o = hda(&[
        "sweep-da",
        "--checkpoint",
        ck,
        "--checkpoint",
        ck,
        "--snr",
        "5",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 3);
    assert_eq!(
        code(&hda(&["sweep-bw", "--checkpoint", ck, "--snr", "5,6"])),
        2
    );

    let o = hda(&["infer", "--checkpoint", ck, "--snr", "inf"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 1 + 2);

    // a config without a key cannot run the security experiment
    let nokey = f.config.with_file_name("nokey.toml");
    std::fs::write(&nokey, TINY.replace("cipher_key", "# cipher_key")).unwrap();
    assert_eq!(
        code(&hda(&[
            "security",
            "--checkpoint",
            ck,
            "--config",
            s(&nokey)
        ])),
        2
    );
}
