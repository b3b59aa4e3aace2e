import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sample_ids_channel(code, params, rng):
    """Bit-level sampler of the decoder's channel law, for building test
    instances without the timestamp machinery."""
    run = params.max_insert_run

    def burst():
        m = 0
        while m < run and rng.random() < params.p_insert:
            m += 1
        return m

    out = [0] * burst()
    pending = 0
    for bit in code:
        pending ^= int(bit)
        if rng.random() < params.p_delete:
            m = burst()
            if m:
                out.append(int(pending ^ (rng.random() < params.p_sub)))
                out.extend([0] * (m - 1))
                pending = 0
        else:
            m = burst()
            out.append(int(pending ^ (rng.random() < params.p_sub)))
            out.extend([0] * m)
            pending = 0
    return np.array(out, dtype=np.uint8)
