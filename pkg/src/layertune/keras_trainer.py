"""Minibatch training of a partially frozen keras model with class-weighted CE."""

from __future__ import annotations

import logging
import math

import keras
import numpy as np

from .freeze import FreezePlan
from .ingest import CLASSES, SplitResult
from .losses import keras_weighted_cce, weighted_categorical_cross_entropy
from .registry import ModelHandle, preprocess_batch
from .sweep import EpochRecord, TrainConfig, TrainOutcome

log = logging.getLogger(__name__)


class SampleBatches(keras.utils.PyDataset):
    """Stacks ImageSample pixels into preprocessed batches, reshuffling each epoch."""

    def __init__(self, samples, batch_size, mode, num_classes=3, shuffle=False, seed=0):
        super().__init__()
        self.samples = samples
        self.batch_size = batch_size
        self.mode = mode
        self.num_classes = num_classes
        self.shuffle = shuffle
        self._rng = np.random.default_rng(seed)
        self.order = np.arange(len(samples))
        if shuffle:
            self._rng.shuffle(self.order)

    def __len__(self):
        return math.ceil(len(self.samples) / self.batch_size)

    def __getitem__(self, i):
        idx = self.order[i * self.batch_size : (i + 1) * self.batch_size]
        x = np.stack([np.asarray(self.samples[j].pixels, dtype=np.float32) for j in idx])
        labels = np.array([int(self.samples[j].label) for j in idx])
        y = np.eye(self.num_classes, dtype=np.float32)[labels]
        return preprocess_batch(x, self.mode), y

    def on_epoch_end(self):
        if self.shuffle:
            self._rng.shuffle(self.order)


class _ValidationTracker(keras.callbacks.Callback):
    def __init__(self, batches: SampleBatches, weights, patience: int | None):
        super().__init__()
        self.batches = batches
        self.weights = weights
        self.patience = patience
        self.labels = np.array([int(s.label) for s in batches.samples])
        self.records: list[EpochRecord] = []
        self.best_acc = -1.0
        self.best_confusion = None
        self._since_best = 0

    def on_epoch_end(self, epoch, logs=None):
        logs = logs or {}
        probs = self.model.predict(self.batches, verbose=0).astype(np.float64)
        probs /= probs.sum(axis=1, keepdims=True)
        k = probs.shape[1]
        onehot = np.eye(k)[self.labels]
        pred = probs.argmax(axis=1)
        val_loss = weighted_categorical_cross_entropy(onehot, probs, self.weights)
        val_acc = float(np.mean(pred == self.labels))
        self.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=float(logs.get("loss", float("nan"))),
                train_acc=float(logs.get("categorical_accuracy", float("nan"))),
                val_loss=val_loss,
                val_acc=val_acc,
            )
        )
        if not math.isfinite(self.records[-1].train_loss):
            self.model.stop_training = True
        if val_acc > self.best_acc:
            self.best_acc = val_acc
            cm = np.zeros((k, k), dtype=int)
            np.add.at(cm, (self.labels, pred), 1)
            self.best_confusion = cm.tolist()
            self._since_best = 0
        else:
            self._since_best += 1
            if self.patience is not None and self._since_best >= self.patience:
                self.model.stop_training = True


class KerasTrainer:
    """Compiles the handle's model with the weighted loss and fits it.

    Seeds keras/numpy/python RNGs from ``cfg.seed``; bitwise reproducibility
    additionally depends on the backend's kernel determinism.
    """

    def __init__(self, verbose: int = 0):
        self.verbose = verbose

    def train(self, model: ModelHandle, plan: FreezePlan, data: SplitResult, cfg: TrainConfig) -> TrainOutcome:
        keras.utils.set_random_seed(cfg.seed)
        k = model.num_classes
        weights = cfg.class_weights or dict.fromkeys(CLASSES[:k], 1.0)
        net = model.model
        optimizer = keras.optimizers.get({"class_name": cfg.optimizer_name, "config": {"learning_rate": cfg.learning_rate}})
        net.compile(optimizer=optimizer, loss=keras_weighted_cce(weights, k), metrics=["categorical_accuracy"])
        mode = model.arch.preprocess_mode
        train = SampleBatches(data.train, cfg.batch_size, mode, k, shuffle=True, seed=cfg.seed)
        val = SampleBatches(data.val, cfg.batch_size, mode, k)
        tracker = _ValidationTracker(val, weights, cfg.early_stop_patience)
        net.fit(train, epochs=cfg.epochs, callbacks=[tracker], verbose=self.verbose)
        return TrainOutcome(tracker.records, tracker.best_confusion)
