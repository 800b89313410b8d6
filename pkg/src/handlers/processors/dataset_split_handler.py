import logging
from handlers.abstract_handler import AbstractHandler
from drn.data import SplitSpec, kfold, split
from drn.errors import SplitError

logger = logging.getLogger(__name__)


class DatasetSplitHandler(AbstractHandler):
    """
    Splits request["dataset"] into request["train"] and request["test"].

    The split comes from request["split"] (a SplitSpec), from
    request["fold"] = (index, k) for a k-fold partition, or from the split
    section of request["config"]. With none of these the whole dataset
    becomes the test set.
    """

    def handle(self, request: dict) -> dict:
        dataset = self.require(request, "dataset")
        spec = request.get("split")
        if spec is None and request.get("config") is not None:
            section = request["config"].split
            spec = SplitSpec(section.train_fraction, section.train_size, section.stratified, section.seed)

        if request.get("fold") is not None:
            index, k = request["fold"]
            if not 0 <= index < k:
                raise SplitError(f"fold {index} out of range for {k} folds")
            train, test = kfold(dataset, k, request.get("fold_seed", 0))[index]
            logger.info("Fold %d of %d", index, k)
        elif spec is not None:
            train, test = split(dataset, spec)
            logger.info("Split: train sizes %s, test sizes %s", train.sizes, test.sizes)
        else:
            train, test = None, dataset

        request.update({"train": train, "test": test})
        return super().handle(request)
