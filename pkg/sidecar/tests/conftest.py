"""Shared fixtures: a tiny random-weight checkpoint and an in-process client.

The checkpoint is a two-layer encoder with a hand-written vocabulary, built
in a temp dir at session start. Tests never download anything; the hub is
forced offline so a path typo fails fast instead of hitting the network.
"""

from __future__ import annotations

import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

# specials first so [PAD] lands at id 0
VOCAB = [
    "[PAD]",
    "[UNK]",
    "[CLS]",
    "[SEP]",
    "[MASK]",
    "patient",
    "denies",
    "chest",
    "pain",
    "or",
    "shortness",
    "of",
    "breath",
    "hemoglobin",
    "a1c",
    "measured",
    "at",
    "8",
    ".",
    "2",
    "percent",
    "last",
    "month",
    "no",
    "history",
    "substance",
    "use",
    "disorder",
    "documented",
    "fever",
    "cough",
    "normal",
    "elevated",
    "the",
    "and",
]

HIDDEN_SIZE = 32


@pytest.fixture(scope="session")
def hidden_size() -> int:
    return HIDDEN_SIZE


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory) -> str:
    import torch
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    path = tmp_path_factory.mktemp("checkpoint")
    # the wordpiece backend is built directly; a plain vocab.txt no longer is
    # enough to construct a working fast tokenizer
    backend = Tokenizer(
        models.WordPiece({token: i for i, token in enumerate(VOCAB)}, unk_token="[UNK]")
    )
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", VOCAB.index("[CLS]")), ("[SEP]", VOCAB.index("[SEP]"))],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    tokenizer.save_pretrained(path)

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def encoder(checkpoint):
    from embed_sidecar.encoder import TextEncoder

    return TextEncoder(checkpoint, device="cpu")


@pytest.fixture(scope="session")
def client(checkpoint, encoder):
    from fastapi.testclient import TestClient

    from embed_sidecar.app import create_app

    app = create_app(encoder, model_id=checkpoint, max_batch=8)
    with TestClient(app, raise_server_exceptions=False) as test_client:
        yield test_client
