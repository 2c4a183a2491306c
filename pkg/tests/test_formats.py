import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gaga.groupagg import (
    SEQ_MAGIC,
    GroupAggConfig,
    SequenceDataset,
    dataset_from_bytes,
    dataset_to_bytes,
    preprocess_all,
    read_sequence_header,
)

from conftest import random_graph, random_observed


def dataset(rng, variant="gaga"):
    g = random_graph(rng, 25, 2)
    g.labels[3] = -1
    return preprocess_all(g, GroupAggConfig(num_hops=2, alpha=0.75), random_observed(rng, g.labels, 0.4),
                          variant=variant)


def test_header_layout(rng):
    ds = dataset(rng)
    data = dataset_to_bytes(ds)
    magic, version, n, s, d, k, r, c, alpha = struct.unpack_from("<8sIQIIIIId", data)
    assert (magic, version, n, s, d, k, r, c, alpha) == (SEQ_MAGIC, 1, 25, 14, 3, 2, 2, 2, 0.75)
    assert len(data) == 48 + 25 * (8 + 1 + 14 * 3 * 4)
    first = struct.unpack_from("<Qb", data, 48)
    assert first == (0, int(ds.labels[0]))
    row0 = np.frombuffer(data, dtype="<f4", count=3, offset=57)
    assert_array_equal(row0, ds.sequences[0, 0].astype(np.float32))


@pytest.mark.parametrize("variant", ["gaga", "gt"])
def test_round_trip(tmp_path, rng, variant):
    ds = dataset(rng, variant)
    ds.save(tmp_path / "seq.bin")
    back = SequenceDataset.load(tmp_path / "seq.bin")
    assert back.variant == variant and back.config == ds.config and back.num_relations == 2
    assert_array_equal(back.sequences, ds.sequences.astype(np.float32))
    assert_array_equal(back.labels, ds.labels)
    assert back.labels[3] == -1
    assert dataset_to_bytes(back) == dataset_to_bytes(ds)


def test_rejects_corrupt_files(rng):
    data = dataset_to_bytes(dataset(rng))
    with pytest.raises(ValueError, match="magic"):
        dataset_from_bytes(b"X" + data[1:])
    with pytest.raises(ValueError, match="records"):
        dataset_from_bytes(data[:-1])
    with pytest.raises(ValueError, match="truncated"):
        read_sequence_header(data[:10])
    bad_s = bytearray(data)
    struct.pack_into("<I", bad_s, 20, 13)
    with pytest.raises(ValueError, match="inconsistent"):
        read_sequence_header(bytes(bad_s))
    with pytest.raises(FileNotFoundError):
        SequenceDataset.load("/nonexistent/seq.bin")
