import dataclasses

import pytest

from svlab.config import ExperimentConfig
from svlab.encoder import EncoderConfig
from svlab.synth import SynthConfig, make_corpus


@pytest.fixture(scope="session")
def tiny_synth():
    return SynthConfig(n_speakers=6, n_phones=5, frame_dim=12, frames_per_utt=20)


@pytest.fixture(scope="session")
def tiny_exp(tiny_synth):
    exp = ExperimentConfig(
        synth=tiny_synth,
        encoder=EncoderConfig(n_layers=2, model_dim=16, n_attn_heads=2, ffn_dim=20, input_dim=12),
    )
    return exp.replace(
        "train",
        epochs=2,
        warmup_steps=2,
        batch_size=8,
        segment_frames=15,
        lmft_segment_frames=18,
        n_heads=2,
        head_dim=4,
        emb_dim=8,
    )


@pytest.fixture(scope="session")
def tiny_corpus(tiny_synth):
    return make_corpus(tiny_synth, 4, tag="train")
