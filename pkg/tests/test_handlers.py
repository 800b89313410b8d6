import json

import numpy as np
import pytest

from drn.data import MultiTaskDataset, SplitSpec
from drn.errors import ArgumentError, ConfigError, IngestionError, SplitError
from drn.mtl_net import CLASSIFIER, init_net
from handlers.handler_factory import HandlerFactory
from handlers.misc.print_context_handler import PrintContextHandler
from handlers.processors.dataset_split_handler import DatasetSplitHandler
from handlers.processors.evaluation_handler import EvaluationHandler
from handlers.processors.flip_flop_fit_handler import FlipFlopFitHandler
from handlers.readers.experiment_config_reader_handler import ExperimentConfigReaderHandler
from handlers.readers.relationship_reader_handler import RelationshipReaderHandler
from utils.file_utils import read_json, write_text


def constant_net(num_tasks=2, feature_dim=3, num_classes=3, task_names=None):
    """Predicts class 0 for every input."""
    net = init_net(feature_dim, num_classes, num_tasks, task_widths=[], task_names=task_names)
    net.stack.weights[CLASSIFIER][...] = 0.0
    net.stack.biases[CLASSIFIER][:, 0] = 5.0
    return net


def dataset(sizes, feature_dim=3, num_classes=3, names=None):
    rng = np.random.default_rng(0)
    return MultiTaskDataset(
        names or [f"task{t}" for t in range(len(sizes))],
        [rng.standard_normal((n, feature_dim)) for n in sizes],
        [np.arange(n) % num_classes for n in sizes],
        num_classes,
    )


class TestHandlerFactory:
    def test_discovers_every_handler(self):
        HandlerFactory.discover_handlers()
        expected = {
            "TensorSamplesReaderHandler",
            "FlipFlopFitHandler",
            "ExperimentConfigReaderHandler",
            "DatasetReaderHandler",
            "DatasetSplitHandler",
            "DrnTrainerHandler",
            "CheckpointReaderHandler",
            "EvaluationHandler",
            "RelationshipReaderHandler",
            "RelationshipExportHandler",
            "ModelCheckpointWriterHandler",
            "TrainReportWriterHandler",
            "RelationshipWriterHandler",
            "DatasetCsvWriterHandler",
            "LocalFileWriterHandler",
            "StdoutWriterHandler",
            "PrintContextHandler",
        }
        assert expected <= set(HandlerFactory._handlers)

    def test_unknown_handler(self):
        with pytest.raises(ArgumentError, match="NoSuchHandler"):
            HandlerFactory.get_handler("NoSuchHandler")

    def test_chain_runs_in_order(self, tmp_path):
        head = HandlerFactory.chain("RelationshipExportHandler", "LocalFileWriterHandler")
        out = tmp_path / "rel.csv"
        request = head.handle(
            {
                "relationship": np.eye(2),
                "task_names": ["a", "b"],
                "layer": "classifier",
                "format": "csv",
                "write_file_path": str(out),
            }
        )
        assert request["status"] is True
        assert out.read_text() == "task,a,b\na,1.0,0.0\nb,0.0,1.0\n"

    def test_require(self):
        with pytest.raises(ArgumentError, match="'dataset'"):
            DatasetSplitHandler().handle({})


class TestDatasetSplitHandler:
    def test_split_spec(self):
        request = DatasetSplitHandler().handle({"dataset": dataset([10, 10]), "split": SplitSpec(train_size=4)})
        assert request["train"].sizes == [4, 4]
        assert request["test"].sizes == [6, 6]

    def test_fold(self):
        request = DatasetSplitHandler().handle({"dataset": dataset([10, 10]), "fold": (1, 5)})
        assert request["test"].sizes == [2, 2]
        assert request["train"].sizes == [8, 8]

    def test_fold_out_of_range(self):
        with pytest.raises(SplitError):
            DatasetSplitHandler().handle({"dataset": dataset([10]), "fold": (5, 5)})

    def test_no_split_tests_everything(self):
        ds = dataset([10])
        request = DatasetSplitHandler().handle({"dataset": ds})
        assert request["train"] is None
        assert request["test"] is ds


class TestEvaluationHandler:
    def test_constant_model(self):
        request = EvaluationHandler().handle({"net": constant_net(), "test": dataset([9, 6])})
        assert request["accuracies"] == [pytest.approx(1 / 3), pytest.approx(1 / 3)]
        assert request["text"].splitlines()[0] == "task,accuracy"
        assert request["text"].splitlines()[-1].startswith("average,0.333")

    def test_train_subset(self):
        request = EvaluationHandler().handle(
            {"net": constant_net(), "train": dataset([4, 4]), "test": dataset([9, 6]), "subset": "train"}
        )
        assert request["accuracies"] == [0.5, 0.5]

    @pytest.mark.parametrize(
        "data", [dataset([3, 3, 3]), dataset([3, 3], feature_dim=4), dataset([3, 3], num_classes=4)]
    )
    def test_mismatch(self, data):
        with pytest.raises(ArgumentError):
            EvaluationHandler().handle({"net": constant_net(), "test": data})

    def test_empty_task(self):
        with pytest.raises(SplitError):
            EvaluationHandler().handle({"net": constant_net(), "test": dataset([3, 0])})

    def test_names_matched_by_position(self, caplog):
        request = EvaluationHandler().handle(
            {"net": constant_net(task_names=["a", "b"]), "test": dataset([3, 3], names=["x", "y"])}
        )
        assert "by position" in caplog.text
        assert request["text"].splitlines()[1].startswith("a,")


class TestExperimentConfigReaderHandler:
    def test_manifest_relative_to_config(self, tmp_path):
        config_dir = tmp_path / "configs"
        config_dir.mkdir()
        path = config_dir / "office.json"
        path.write_text(json.dumps({"schema_version": 1, "data": {"manifest": "../data/manifest.json"}}))
        request = ExperimentConfigReaderHandler().handle({"config_path": str(path)})
        assert request["manifest"] == str(config_dir / "../data/manifest.json")

    def test_overrides_and_seed(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"schema_version": 1, "data": {"synthetic": {}}}))
        request = ExperimentConfigReaderHandler().handle(
            {"config_path": str(path), "overrides": ["$.train.epochs=2"], "seed": 9}
        )
        config = request["config"]
        assert config.train.epochs == 2
        assert config.train.seed == config.synthetic.seed == 9
        assert request["manifest"] is None

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"schema_version": 1,\n  "data": }')
        with pytest.raises(IngestionError, match="line 2"):
            ExperimentConfigReaderHandler().handle({"config_path": str(path)})


class TestRelationshipReaderHandler:
    def test_missing_layer_lists_available(self, tmp_path):
        (tmp_path / "relationship_classifier.json").write_text("{}")
        with pytest.raises(IngestionError, match="available: classifier"):
            RelationshipReaderHandler().handle({"model_dir": str(tmp_path), "layer": "bottleneck"})


class TestFlipFlopFitHandler:
    def test_default_settings(self, monkeypatch):
        monkeypatch.delenv("DRN_FLIP_FLOP_TOL", raising=False)
        monkeypatch.delenv("DRN_FLIP_FLOP_MAX_ITER", raising=False)
        assert FlipFlopFitHandler.settings() == (1e-8, 200)

    @pytest.mark.parametrize("name, value", [("DRN_FLIP_FLOP_TOL", "tiny"), ("DRN_FLIP_FLOP_MAX_ITER", "0")])
    def test_bad_settings(self, monkeypatch, name, value):
        monkeypatch.setenv(name, value)
        with pytest.raises(ConfigError):
            FlipFlopFitHandler.settings()


class TestFileUtils:
    def test_write_failure_is_recorded(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        request = {}
        assert not write_text(request, str(blocker / "out.txt"), "x")
        assert request["status"] is False
        assert "out.txt" in request["error"]

    def test_write_records_paths(self, tmp_path):
        request = {}
        write_text(request, str(tmp_path / "a" / "b.txt"), "x")
        assert request == {"written": [str(tmp_path / "a" / "b.txt")], "status": True}

    def test_read_missing(self, tmp_path):
        with pytest.raises(IngestionError, match="cannot read"):
            read_json(str(tmp_path / "missing.json"))


def test_print_context_describes_values():
    assert PrintContextHandler.describe(np.zeros((2, 3))) == "ndarray(2, 3)"
    assert PrintContextHandler.describe([1, 2]) == "list of 2"
    assert PrintContextHandler.describe("x" * 100).endswith("...")
