import csv
import io
import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from drn.config import TrainConfig
from drn.errors import ArgumentError, IngestionError
from drn.kron_gauss import KronCovariance, flip_flop_mle, mle_mean
from drn.mtl_net import init_net
from drn.serialization import (
    accuracy_csv,
    checkpoint_from_dict,
    checkpoint_to_dict,
    dumps,
    fit_result_to_dict,
    format_number,
    relationship_from_dict,
    relationship_to_csv,
    relationship_to_dict,
    report_to_csv,
    samples_from_dict,
    samples_to_dict,
)
from drn.tensor_core import Tensor3
from drn.trainer import EpochRecord, TrainReport, extract_relationship, train


@pytest.fixture
def trained(related_tasks):
    ds, _ = related_tasks
    net = init_net(ds.feature_dim, 3, ds.num_tasks, [5], [4], 0.1, np.random.default_rng(0), ds.task_names)
    cfg = TrainConfig(epochs=2, batch_size=8, learning_rate=0.01)
    net, cov, report = train(net, ds, cfg)
    return net, cov, report


class TestFormatNumber:
    @pytest.mark.parametrize(
        "value, text",
        [(0.1, "0.10000000000000001"), (1.0, "1.0"), (3, "3"), (True, "true"), (np.float64(-2.5), "-2.5")],
    )
    def test_text(self, value, text):
        assert format_number(value) == text

    def test_round_trips(self, rng):
        for value in rng.standard_normal(200) * 10.0 ** rng.integers(-30, 30, 200):
            assert float(format_number(value)) == value

    @pytest.mark.parametrize("value", [np.nan, np.inf])
    def test_non_finite(self, value):
        with pytest.raises(ArgumentError):
            format_number(value)


class TestDumps:
    def test_is_json(self):
        doc = {"name": "a", "values": np.array([1.5, 2.0]), "nested": [{"k": None}], "empty": []}
        text = dumps(doc)
        assert text.endswith("\n")
        assert json.loads(text) == {"name": "a", "values": [1.5, 2.0], "nested": [{"k": None}], "empty": []}

    def test_numeric_lists_on_one_line(self):
        assert '"values": [1.0, 2.0, 3]' in dumps({"values": [1.0, 2.0, 3]})

    def test_unsupported(self):
        with pytest.raises(ArgumentError):
            dumps({"x": object()})


class TestCheckpoint:
    def test_round_trip(self, trained):
        net, cov, _ = trained
        text = dumps(checkpoint_to_dict(net, "drn", cov))
        again, variant, cov_again = checkpoint_from_dict(json.loads(text))
        assert variant == "drn"
        assert again.task_names == net.task_names
        for a, b in zip(net.trunk, again.trunk):
            assert_array_equal(a.weight, b.weight)
            assert_array_equal(a.bias, b.bias)
            assert a.activation == b.activation
        for layer in net.stack.layer_ids:
            assert_array_equal(net.stack.weights[layer], again.stack.weights[layer])
            assert_array_equal(net.stack.biases[layer], again.stack.biases[layer])
            for f, g in zip(cov.layers[layer].factors, cov_again.layers[layer].factors):
                assert_array_equal(f.matrix, g.matrix)
        assert dumps(checkpoint_to_dict(again, variant, cov_again)) == text

    def test_without_covariance(self, small_net):
        doc = json.loads(dumps(checkpoint_to_dict(small_net, "mtl", None)))
        assert doc["covariance"] is None
        _, variant, cov = checkpoint_from_dict(doc)
        assert variant == "mtl"
        assert cov is None

    def test_wrong_format(self):
        with pytest.raises(IngestionError, match="drn-checkpoint/1"):
            checkpoint_from_dict({"format": "other"})

    def test_truncated_weights(self, small_net):
        doc = json.loads(dumps(checkpoint_to_dict(small_net, "drn", None)))
        doc["stack"]["layers"][0]["weight"] = doc["stack"]["layers"][0]["weight"][:-1]
        with pytest.raises(IngestionError, match="stack weight"):
            checkpoint_from_dict(doc)

    def test_missing_field(self, small_net):
        doc = json.loads(dumps(checkpoint_to_dict(small_net, "drn", None)))
        del doc["trunk"]
        with pytest.raises(IngestionError, match="malformed checkpoint"):
            checkpoint_from_dict(doc)

    def test_softmax_trunk_rejected(self, small_net):
        doc = json.loads(dumps(checkpoint_to_dict(small_net, "drn", None)))
        doc["trunk"][0]["activation"] = "softmax"
        with pytest.raises(IngestionError, match="softmax"):
            checkpoint_from_dict(doc)


class TestRelationship:
    def test_json_and_csv_agree(self, trained):
        net, cov, _ = trained
        matrix = extract_relationship(cov, "classifier")
        doc = json.loads(dumps(relationship_to_dict("classifier", net.task_names, matrix)))
        layer, names, parsed = relationship_from_dict(doc)
        assert layer == "classifier"
        assert names == net.task_names
        assert_array_equal(parsed, matrix)

        rows = list(csv.reader(io.StringIO(relationship_to_csv(names, matrix))))
        assert rows[0] == ["task", *names]
        assert [r[0] for r in rows[1:]] == names
        assert_array_equal(np.array([[float(v) for v in r[1:]] for r in rows[1:]]), matrix)

    def test_export_import_export_is_stable(self, trained):
        net, cov, _ = trained
        matrix = extract_relationship(cov, "classifier")
        text = dumps(relationship_to_dict("classifier", net.task_names, matrix))
        layer, names, parsed = relationship_from_dict(json.loads(text))
        assert dumps(relationship_to_dict(layer, names, parsed)) == text
        assert relationship_to_csv(names, parsed) == relationship_to_csv(net.task_names, matrix)

    def test_bad_shape(self):
        with pytest.raises(IngestionError):
            relationship_from_dict({"layer": "x", "task_names": ["a", "b"], "matrix": [[1.0]]})


class TestReportCsv:
    def report(self, test=True):
        return TrainReport(
            ["a", "b"],
            [
                EpochRecord(1, 12.5, [0.5, 0.25], [0.4, 0.2] if test else None, {}, 0.0123456789, 0.5),
                EpochRecord(2, 10.0, [0.75, 0.5], [0.6, 0.3] if test else None, {}, 0.01, 0.25),
            ],
        )

    def test_columns(self):
        rows = list(csv.reader(io.StringIO(report_to_csv(self.report()))))
        assert rows[0] == ["epoch", "objective", "train_acc_a", "train_acc_b", "test_acc_a", "test_acc_b"]
        assert rows[1] == ["1", "12.5", "0.5", "0.25", "0.40000000000000002", "0.20000000000000001"]
        assert len(rows) == 3

    def test_without_test_set(self):
        header = report_to_csv(self.report(test=False)).splitlines()[0]
        assert header == "epoch,objective,train_acc_a,train_acc_b"

    def test_timings(self):
        rows = list(csv.reader(io.StringIO(report_to_csv(self.report(), timings=True))))
        assert rows[0][-2:] == ["sgd_seconds", "cov_seconds"]
        assert rows[1][-2:] == ["0.012346", "0.500000"]


def test_accuracy_csv():
    text = accuracy_csv(["a", "b"], [0.5, 1.0])
    assert text == "task,accuracy\na,0.5\nb,1.0\naverage,0.75\n"


class TestSamples:
    def test_row_major(self):
        (t,) = samples_from_dict({"dims": [1, 2, 2], "samples": [[1, 2, 3, 4]]})
        assert t.data[0, 1, 0] == 3.0
        doc = samples_to_dict([t])
        assert doc["dims"] == [1, 2, 2]
        assert_array_equal(doc["samples"][0], [1.0, 2.0, 3.0, 4.0])

    def test_wrong_length(self):
        with pytest.raises(IngestionError, match="does not fit"):
            samples_from_dict({"dims": [1, 2, 2], "samples": [[1, 2, 3]]})

    def test_missing_dims(self):
        with pytest.raises(IngestionError):
            samples_from_dict({"samples": []})


def test_fit_result_fields(rng):
    samples = [Tensor3(rng.standard_normal((2, 3, 2))) for _ in range(30)]
    mean = mle_mean(samples)
    result = flip_flop_mle(samples, mean)
    doc = fit_result_to_dict(mean, result.covariance, 1.0, result)
    assert list(doc) == ["dims", "mean", "factors", "scale", "iterations", "converged", "log_likelihood"]
    assert doc["dims"] == [2, 3, 2]
    assert [len(f) for f in doc["factors"]] == [4, 9, 4]
    assert isinstance(result.covariance, KronCovariance)
