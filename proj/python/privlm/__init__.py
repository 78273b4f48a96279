"""Desk-scale lab for privacy-protecting LM fine-tuning experiments.

The heavy lifting lives in the C++ extension ``privlm._core``. This wrapper
resolves the packaged data directory (lexicons and prompt templates) so the
defaults work out of the box.
"""

import os
from pathlib import Path

from ._core import (  # noqa: F401
    Corpus,
    LmParams,
    ModelConfig,
    PrivlmError,
    Sample,
    Strategy,
    TemplateLibrary,
    Tokenizer,
    annotate,
    check_dpi,
    delta,
    exact_kl,
    generate,
    init_model,
    load_jsonl,
    remove_text,
    rouge1,
    rouge2,
    rouge_l,
    run_matrix,
    s_priv,
    save_jsonl,
    split_corpus,
    substitute_text,
    synthesize_corpus,
    train_lm,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def data_dir() -> str:
    """Directory holding the lexicon and template assets."""
    env = os.environ.get("PRIVLM_DATA")
    if env:
        return env
    packaged = Path(__file__).resolve().parent / "data"
    if packaged.is_dir():
        return str(packaged)
    # source checkout: repo_root/data
    repo = Path(__file__).resolve().parents[2] / "data"
    return str(repo)


if "PRIVLM_DATA" not in os.environ:
    os.environ["PRIVLM_DATA"] = data_dir()
