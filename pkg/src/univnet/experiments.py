"""Desk-scale experiments: overfitting a single clip."""

import json
import time
from pathlib import Path

from univnet import dsp, synth
from univnet.metrics import spectral_rmse
from univnet.training import TrainConfig, train

COPY_SYNTHESIS_SEED = 1234


def overfit_one_clip(out_dir, cfg=None, clip_seconds=1.0, clip_seed=0):
    """Train on one synthetic clip and track copy-synthesis RMSE at every checkpoint.

    Returns a dict with the per-step ``l_aux`` series, ``rmse_by_step`` and
    wall-clock seconds; it is also written to ``out_dir/overfit_report.json``.
    """
    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    clip = synth.synthetic_voice(clip_seconds, seed=clip_seed)
    dsp.write_wav(data_dir / "clip.wav", clip)
    clip = dsp.load_wav(data_dir / "clip.wav")
    cfg = cfg if cfg is not None else TrainConfig()
    rmse_by_step = {}

    def on_checkpoint(step, gen, stats):
        mel = dsp.log_mel(clip, stats)
        rmse_by_step[step] = spectral_rmse(clip, gen.synthesize(mel, seed=COPY_SYNTHESIS_SEED))

    start = time.perf_counter()
    result = train(data_dir, cfg, out_dir / "run", eval_hook=on_checkpoint)
    report = {
        "config": cfg.to_dict(),
        "seconds": time.perf_counter() - start,
        "l_aux": [h["l_aux"] for h in result.history],
        "rmse_by_step": rmse_by_step,
    }
    (out_dir / "overfit_report.json").write_text(json.dumps(report, indent=1))
    return report
