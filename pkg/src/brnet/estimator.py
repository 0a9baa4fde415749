"""Scikit-learn style front door for the whole pipeline.

The estimator consumes lists of AnnotatedScene (fully supervised: scenes
carry their own annotations, so fit ignores y) and predicts per-scene
detection lists. Constructor parameters are stored verbatim per sklearn
convention and only validated/expanded inside fit.
"""

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import Config, ModelConfig, TrainConfig, DataConfig
from .losses import LossWeights
from .metrics import evaluate
from .scenes import check_scenes
from .train import fit_model, scene_to_tensors


class WormInstanceSegmenter(BaseEstimator):
    """Trainable amodal instance segmenter for overlapping worm scenes."""

    def __init__(
        self,
        widths=(16, 32, 64, 128),
        use_attention=True,
        use_overlap_head=True,
        use_nonoverlap_head=True,
        use_recombine=True,
        attention_mid_channels=32,
        total_iters=200,
        warmup_iters=20,
        batch_size=2,
        lr_initial=0.01,
        lr_final=0.001,
        lambda_dec=1.0,
        lambda_rmask=1.0,
        lambda_cons=1.0,
        proposal_mode="ground_truth",
        seed=0,
    ):
        self.widths = widths
        self.use_attention = use_attention
        self.use_overlap_head = use_overlap_head
        self.use_nonoverlap_head = use_nonoverlap_head
        self.use_recombine = use_recombine
        self.attention_mid_channels = attention_mid_channels
        self.total_iters = total_iters
        self.warmup_iters = warmup_iters
        self.batch_size = batch_size
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.lambda_dec = lambda_dec
        self.lambda_rmask = lambda_rmask
        self.lambda_cons = lambda_cons
        self.proposal_mode = proposal_mode
        self.seed = seed

    def _config(self):
        return Config(
            model=ModelConfig(
                widths=tuple(self.widths),
                use_attention=self.use_attention,
                use_overlap_head=self.use_overlap_head,
                use_nonoverlap_head=self.use_nonoverlap_head,
                use_recombine=self.use_recombine,
                attention_mid_channels=self.attention_mid_channels,
            ),
            train=TrainConfig(
                batch_size=self.batch_size,
                lr_initial=self.lr_initial,
                lr_final=self.lr_final,
                warmup_iters=self.warmup_iters,
                total_iters=self.total_iters,
                proposal_mode=self.proposal_mode,
                seed=self.seed,
                loss_weights=LossWeights(
                    lambda_dec=self.lambda_dec,
                    lambda_rmask=self.lambda_rmask,
                    lambda_cons=self.lambda_cons,
                ),
            ),
            data=DataConfig(),
        )

    def fit(self, X, y=None):
        """Train on annotated scenes; y is ignored (annotations ride on X)."""
        scenes = check_scenes(X, name="X")
        config = self._config()
        model, _, history = fit_model(config, scenes)
        self.model_ = model
        self.config_ = config
        self.history_ = history
        self.n_features_in_ = len(scenes)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this WormInstanceSegmenter instance is not fitted yet"
            )

    def predict(self, X):
        """Per-scene detection lists (masks pasted at full image size)."""
        self._check_fitted()
        scenes = check_scenes(X, name="X")
        mode = self.config_.train.proposal_mode
        results = []
        for scene in scenes:
            image, target = scene_to_tensors(scene)
            gt_boxes = [target["boxes"]] if mode == "ground_truth" else None
            results.append(
                self.model_.predict(image[None], proposal_mode=mode, gt_boxes=gt_boxes)[0]
            )
        return results

    def score(self, X, y=None):
        """AP50 of the predictions against the scenes' own annotations."""
        self._check_fitted()
        scenes = check_scenes(X, name="X")
        dets = self.predict(scenes)
        gts = [[inst.amodal_mask for inst in s.instances] for s in scenes]
        return evaluate(dets, gts).ap50
