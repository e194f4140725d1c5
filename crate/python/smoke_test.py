"""Smoke test for the hda_py extension.

Builds the extension and the `hda` binary in release mode, trains a tiny checkpoint
and exercises every binding once:

    python3 python/smoke_test.py
"""

import math
import os
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent
HERE = ROOT / "python"

TINY = """
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
"""


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "hda-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    subprocess.run(["cargo", "build", "--release", "-p", "hda-cli"], cwd=ROOT, check=True)
    target = pathlib.Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target")) / "release"
    shutil.copy(target / "libhda_py.so", HERE / "hda_py.so")
    return target / "hda"


def main():
    hda = build()
    sys.path.insert(0, str(HERE))
    import hda_py

    flat = [((i * 37) % 101) / 100.0 for i in range(3 * 16 * 16)]
    assert hda_py.psnr(flat, flat, 16) == 100.0
    assert abs(hda_py.ms_ssim(flat, flat, 16) - 1.0) < 1e-12
    try:
        hda_py.psnr(flat, flat[:-1], 16)
    except ValueError:
        pass
    else:
        raise AssertionError("short image accepted")

    with tempfile.TemporaryDirectory() as tmp:
        config = pathlib.Path(tmp) / "tiny.toml"
        config.write_text(TINY)
        ckpt = pathlib.Path(tmp) / "tiny.ckpt"
        subprocess.run(
            [str(hda), "train", "--config", str(config), "--checkpoint", str(ckpt)],
            check=True,
            stdout=subprocess.DEVNULL,
        )
        try:
            hda_py.Model.load(str(pathlib.Path(tmp) / "missing.ckpt"))
        except OSError:
            pass
        else:
            raise AssertionError("missing checkpoint loaded")

        model = hda_py.Model.load(str(ckpt))
        assert model.image_size == 16
        image = model.held_out(1)[0]
        recon, quality = model.transmit(image, 10.0, "diff", 3)
        assert len(recon) == len(image) and math.isfinite(quality)
        assert model.transmit(image, 10.0, "diff", 3) == (recon, quality)
        assert abs(hda_py.psnr(image, recon, 16) - quality) < 1e-9

        sweep = model.sweep_snr([0.0, 10.0]).splitlines()
        assert sweep[0].startswith("snr_db,channel,")
        assert len(sweep) == 3
        security = model.security(10.0, trials=2).splitlines()
        assert len(security) == 3
    print("python smoke test passed")


if __name__ == "__main__":
    main()
