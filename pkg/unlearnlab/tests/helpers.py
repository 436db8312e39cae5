import os
import unittest

import torch

from unlearnlab.services import corpus
from unlearnlab.services.seqmodel import (
    BOS_ID,
    EOS_ID,
    SPECIAL_TOKENS,
    CausalLM,
    ModelConfig,
    TabularLM,
    Vocab,
)

"""
Utilidades compartidas por los tests: corpus y modelos diminutos.
"""

slow = unittest.skipUnless(os.getenv('UNLEARNLAB_SLOW') == '1', 'reproducción larga; exportar UNLEARNLAB_SLOW=1')


def tiny_bundle(seed=0, fraction=0.1):
    """10 autores x 4 preguntas, 20 hechos del mundo, forget de 1 autor."""
    bundle = corpus.generate(seed, n_authors=10, n_qa_per_author=4, n_world=20)
    return corpus.with_split(bundle, fraction)


def tiny_model(vocab_size, seed=0, **kwargs):
    params = dict(d_model=8, n_layers=1, n_heads=2, context=48, seed=seed)
    params.update(kwargs)
    return CausalLM(ModelConfig(vocab_size=vocab_size, **params))


def chain_vocab():
    """Vocabulario <pad> <bos> <eos> <unk> a b (ids 4 y 5)."""
    return Vocab(SPECIAL_TOKENS + ('a', 'b'))


def chain_model(eos_first=False):
    """
    TabularLM casi determinista: bos -> a -> b -> eos.
    Con eos_first todas las filas ponen la masa en EOS.
    """
    size = 6
    table = torch.full((size, size), 0.02, dtype=torch.float64)
    successors = {BOS_ID: 4, 4: 5, 5: EOS_ID}
    for row in range(size):
        target = EOS_ID if eos_first else successors.get(row, EOS_ID)
        table[row, target] = 0.9
    return TabularLM.from_probabilities(table)
