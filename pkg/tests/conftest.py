"""Shared fixtures: synthetic scenes and a full pipeline run.

The end-to-end workspace is expensive enough (a few seconds) that the
pipeline tests share one session-scoped run and only assert on its
artifacts; tests that need to mutate a workspace copy it first.
"""

import dataclasses

import pytest

import logsplat.pipeline as pl


@pytest.fixture(scope="session")
def ring8_scene(tmp_path_factory):
    root = tmp_path_factory.mktemp("ring8_scene")
    log, truth = pl.synth_scene("ring8", 7, root)
    return log, truth


@pytest.fixture(scope="session")
def pipeline_cfg():
    cfg = pl.default_config()
    return dataclasses.replace(
        cfg, generator=dataclasses.replace(cfg.generator, mode="copy_nearest")
    )


@pytest.fixture(scope="session")
def ring8_ws(tmp_path_factory, ring8_scene, pipeline_cfg):
    """ring8 scene run through every stage with the copy_nearest generator."""
    log, _ = ring8_scene
    root = tmp_path_factory.mktemp("ring8_ws")
    pl.run_harvest(log, root, pipeline_cfg)
    pl.run_generate(root, pipeline_cfg)
    pl.run_lift(root, pipeline_cfg)
    pl.run_evaluate(root, pipeline_cfg)
    return root
