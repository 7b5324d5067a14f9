import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from masknet.data import CATEGORICAL, NUMERICAL, Field, FeatureSchema
from masknet.numeric import make_rng


@pytest.fixture
def rng():
    return make_rng(1234, 77)


def small_schema(f_cat=2, f_num=1, vocab=3):
    fields = [Field(f"c{i}", CATEGORICAL, tuple(f"t{j}" for j in range(vocab))) for i in range(f_cat)]
    fields += [Field(f"x{i}", NUMERICAL) for i in range(f_num)]
    return FeatureSchema(tuple(fields))


def random_batch(schema, rng, n=4, oov=True):
    """Random encoded batch conforming to a schema; includes OOV indices."""
    hi = [f.vocab_size + (1 if oov else 0) for f in schema.categorical]
    cat = np.column_stack([rng.integers(0, h, size=n) for h in hi]).astype(np.int64) if hi else np.zeros((n, 0), dtype=np.int64)
    num = rng.normal(size=(n, len(schema.numerical)))
    labels = rng.integers(0, 2, size=n).astype(np.float64)
    return cat, num, labels
