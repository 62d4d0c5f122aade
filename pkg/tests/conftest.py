# coding:utf-8
import os
import tempfile

# keep logs of the test session out of the user's data folder
os.environ.setdefault("VCNET_HOME", tempfile.mkdtemp(prefix="vcnet-tests-"))

import logging
from dataclasses import replace

import hypothesis
import numpy as np
import pytest

from app.common.config import ArchConfig, PosthocConfig, SynthConfig, TrainingConfig, builtin_config
from app.common.logger import TOPICS
from app.services.vcnet_model import init_model

np.seterr(all="warn")



hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


def toy_arch(p: int, h: int, latent: int, condition: int, encoderHidden=None, decoderHidden=None,
             predictorHidden=None) -> ArchConfig:
    """ smallest architecture with the requested block widths """
    encoder = (h + condition,) + ((encoderHidden,) if encoderHidden else ()) + (latent,)
    decoder = (latent + condition,) + ((decoderHidden,) if decoderHidden else ()) + (p,)
    predictor = (h,) + ((predictorHidden,) if predictorHidden else ()) + (condition,)
    return ArchConfig((p, h), encoder, decoder, predictor, latent)


def toy_model(rng, p=4, h=3, latent=2, n_classes=2, spans=((1, 3),), **hidden):
    condition = 1 if n_classes == 2 else n_classes
    return init_model(toy_arch(p, h, latent, condition, **hidden), spans, n_classes, rng)


def toy_rows(rng, n, p, spans=((1, 3),)):
    """ random encoded rows: continuous in [0, 1], exact one-hot on every span """
    X = rng.uniform(0.0, 1.0, size=(n, p))
    for start, stop in spans:
        X[:, start:stop] = 0.0
        X[np.arange(n), rng.integers(start, stop, size=n)] = 1.0
    return X


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_weights():
    return TrainingConfig(1.0, 1.0, 1.0, 0.001, 1, 4)


class _Collector(logging.Handler):

    def __init__(self):
        super().__init__(logging.DEBUG)
        self.records = []

    def emit(self, record):
        self.records.append(record)


@pytest.fixture
def logRecords():
    """ records of the toolkit loggers (they do not propagate to the root logger) """
    collector = _Collector()
    loggers = [logging.getLogger(f"vcnet.{topic}") for topic in TOPICS]
    for logger in loggers:
        logger.addHandler(collector)
    yield collector.records
    for logger in loggers:
        logger.removeHandler(collector)


def warnings_of(records):
    return [r.getMessage() for r in records if r.levelno == logging.WARNING]


TINY_SYNTH_ARCH = ArchConfig((8, 6), (9, 4), (7, 8), (6, 3), 4)


def tiny_config(outDir, n=60, **changes):
    """ synthetic experiment small enough to train in well under a second """
    fields = dict(
        arch=TINY_SYNTH_ARCH,
        train=TrainingConfig(1.0, 1.0, 1.0, 0.01, 2, 16),
        posthoc=PosthocConfig(TrainingConfig(0.0, 1.0, 0.0, 0.01, 2, 16), TrainingConfig(1.0, 0.0, 1.0, 0.01, 2, 16)),
        synth=SynthConfig(n, (0.0, 1.0, 3.0), 2),
        out_dir=str(outDir),
    )
    fields.update(changes)
    return replace(builtin_config("synthetic"), **fields)
