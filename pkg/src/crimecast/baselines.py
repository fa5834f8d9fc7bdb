"""Classical per-cell classifiers used as comparison points for the deep models.

Every masked-in cell of a sample becomes one feature vector: its raw count
history over the input window, flattened day-major (``input_days * channels``
values, 330 for the default 30 days x 11 channels). All classifiers expose
``fit(X, y)`` and ``predict_proba(X)`` returning hot-cell scores in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import Adam, Dense, Sequential, bce_loss


@dataclass
class CellFeatures:
    X: np.ndarray  # (n, input_days * channels)
    labels: np.ndarray
    counts: np.ndarray
    rows: np.ndarray
    cols: np.ndarray


def featurize(sample, mask=None, channel=None):
    """Feature vectors of the masked-in cells in row-major order.

    ``channel`` selects the label channel of a multi-label sample.
    """
    x = np.asarray(sample.inputs)
    t, p, q, c = x.shape
    mask = np.ones((p, q), bool) if mask is None else np.asarray(mask, bool)
    rows, cols = np.nonzero(mask)
    feats = x[:, rows, cols, :].transpose(1, 0, 2).reshape(len(rows), t * c).astype(float)
    counts = np.asarray(sample.target_counts)
    if counts.ndim == 3:
        if channel is None:
            raise ValueError("multi-label sample: pass the channel to label with")
        counts = counts[..., int(channel)]
    counts = counts[rows, cols].astype(np.int64)
    return CellFeatures(feats, (counts >= 1).astype(np.int64), counts, rows, cols)


def stack_features(samples, mask=None, channel=None):
    parts = [featurize(s, mask, channel) for s in samples]
    return (np.concatenate([f.X for f in parts]), np.concatenate([f.labels for f in parts]))


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"expected X (n, d) and y (n,), got {X.shape} and {y.shape}")
    if len(X) == 0:
        raise ValueError("empty training set")
    return X, y


class KNN:
    """k-nearest neighbours by Euclidean distance; ties go to the lower training index."""

    def __init__(self, k=3, chunk_elements=2_000_000):
        self.k = k
        self.chunk_elements = chunk_elements

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds the {len(X)} training points")
        self.X, self.y = X, y
        return self

    def neighbours(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        n, d = self.X.shape
        step = max(1, self.chunk_elements // max(1, n * d))
        out = np.empty((len(Q), self.k), np.int64)
        for i in range(0, len(Q), step):
            diff = Q[i:i + step, None, :] - self.X[None]
            dist = np.einsum("qnd,qnd->qn", diff, diff)
            # stable sort keeps index order among equal distances
            out[i:i + step] = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
        return out

    def predict_proba(self, Q):
        return self.y[self.neighbours(Q)].mean(axis=1)


class GaussianNB:
    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        if len(np.unique(y)) < 2:
            raise ValueError("Gaussian NB needs both classes in the training data")
        self.log_prior = np.empty(2)
        self.mean = np.empty((2, X.shape[1]))
        self.var = np.empty((2, X.shape[1]))
        for cls in (0, 1):
            rows = X[y == cls]
            self.log_prior[cls] = np.log(len(rows) / len(X))
            self.mean[cls] = rows.mean(axis=0)
            self.var[cls] = rows.var(axis=0) + self.var_floor
        return self

    def joint_log_likelihood(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        out = np.empty((len(Q), 2))
        for cls in (0, 1):
            v = self.var[cls]
            out[:, cls] = self.log_prior[cls] - 0.5 * (
                np.log(2 * np.pi * v).sum() + (((Q - self.mean[cls]) ** 2) / v).sum(axis=1))
        return out

    def predict_proba(self, Q):
        jll = self.joint_log_likelihood(Q)
        return np.exp(jll[:, 1] - np.logaddexp(jll[:, 0], jll[:, 1]))


class DecisionTree:
    """CART with Gini impurity, midpoint thresholds and ``x <= threshold`` going left.

    ``max_features`` < d draws that many candidate features per node from ``rng``.
    """

    def __init__(self, max_depth=12, min_leaf=5, max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self.n_features = X.shape[1]
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self._grow(X, y.astype(float), np.arange(len(X)), 0)
        for name in ("feature", "left", "right"):
            setattr(self, name, np.array(getattr(self, name), np.int64))
        self.threshold = np.array(self.threshold)
        self.value = np.array(self.value)
        return self

    def _new_node(self, value):
        for lst, v in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1), (self.right, -1), (self.value, value)):
            lst.append(v)
        return len(self.value) - 1

    def _grow(self, X, y, idx, depth):
        node = self._new_node(float(y[idx].mean()))
        n = len(idx)
        pos = y[idx].sum()
        if depth >= self.max_depth or n < 2 * self.min_leaf or pos == 0 or pos == n:
            return node
        split = self._best_split(X[idx], y[idx])
        if split is None:
            return node
        f, thr = split
        go_left = X[idx, f] <= thr
        self.feature[node], self.threshold[node] = f, thr
        self.left[node] = self._grow(X, y, idx[go_left], depth + 1)
        self.right[node] = self._grow(X, y, idx[~go_left], depth + 1)
        return node

    def _best_split(self, X, y):
        n, d = X.shape
        if self.max_features is None or self.max_features >= d:
            features = range(d)
        else:
            features = np.sort(self.rng.choice(d, self.max_features, replace=False))
        total_pos = y.sum()
        parent = n * (1.0 - (total_pos / n) ** 2 - (1 - total_pos / n) ** 2)
        best, best_gain = None, 1e-12
        lo = self.min_leaf
        for f in features:
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            cum = np.cumsum(y[order])
            # split after position i (left = first i+1 points); only between distinct values
            i = np.arange(lo - 1, n - lo)
            if len(i) == 0:
                continue
            i = i[xs[i] < xs[i + 1]]
            if len(i) == 0:
                continue
            nl = i + 1.0
            nr = n - nl
            pl = cum[i]
            pr = total_pos - pl
            weighted = nl - (pl ** 2 + (nl - pl) ** 2) / nl + nr - (pr ** 2 + (nr - pr) ** 2) / nr
            gains = parent - weighted
            j = int(np.argmax(gains))
            if gains[j] > best_gain:
                best_gain = gains[j]
                best = (int(f), 0.5 * (xs[i[j]] + xs[i[j] + 1]))
        return best

    @property
    def depth(self):
        def walk(node):
            if self.left[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))
        return walk(0)

    def predict_proba(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        node = np.zeros(len(Q), np.int64)
        active = self.left[node] >= 0
        while active.any():
            cur = node[active]
            go_left = Q[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.left[node] >= 0
        return self.value[node]


class RandomForest:
    def __init__(self, n_trees=10, max_depth=12, min_leaf=5, max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        n, d = X.shape
        m = max(1, int(np.sqrt(d))) if self.max_features == "sqrt" else self.max_features
        rng = np.random.default_rng(self.seed)
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.max_depth, self.min_leaf, m, rng)
            self.trees.append(tree.fit(X[idx], y[idx]))
        return self

    def predict_proba(self, Q):
        return np.mean([t.predict_proba(Q) for t in self.trees], axis=0)


class MLP:
    """Dense ReLU network with a sigmoid output, trained with BCE and Adam.

    Inputs are ``log1p``-squashed, matching the deep models.
    """

    def __init__(self, hidden=(150,), epochs=20, batch_size=64, learning_rate=1e-3, seed=0):
        self.hidden = tuple(hidden)
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.net = None
        self.history = []

    def _build(self, d):
        rng = np.random.default_rng(self.seed)
        layers, width = [], d
        for i, h in enumerate(self.hidden):
            layers.append(Dense(width, h, "relu", rng=rng, name=f"hidden{i}"))
            width = h
        layers.append(Dense(width, 1, "sigmoid", rng=rng, name="out"))
        self.net = Sequential(layers, name="mlp")

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        self._build(X.shape[1])
        X = np.log1p(X)
        y = y.astype(float)[:, None]
        opt = Adam(lr=self.learning_rate)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1]))
        for _ in range(self.epochs):
            order = rng.permutation(len(X))
            total = 0.0
            for start in range(0, len(X), self.batch_size):
                b = order[start:start + self.batch_size]
                self.net.zero_grad()
                loss, grad = bce_loss(self.net.forward(X[b], training=True), y[b])
                self.net.backward(grad)
                opt.step(self.net.named_parameters())
                total += loss * len(b)
            self.history.append(total / len(X))
        return self

    def predict_proba(self, Q):
        if self.net is None:
            raise RuntimeError("MLP used before fit")
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        return self.net.forward(np.log1p(Q))[:, 0]


def knn(X, y, k=3):
    return KNN(k).fit(X, y)


def gaussian_nb(X, y, var_floor=1e-9):
    return GaussianNB(var_floor).fit(X, y)


def decision_tree(X, y, max_depth=12, min_leaf=5):
    return DecisionTree(max_depth, min_leaf).fit(X, y)


def random_forest(X, y, trees=10, seed=0, **kw):
    return RandomForest(trees, seed=seed, **kw).fit(X, y)


def mlp(X, y, hidden=(150,), **kw):
    return MLP(hidden, **kw).fit(X, y)


BASELINES = {
    "knn": lambda seed: KNN(3),
    "gnb": lambda seed: GaussianNB(),
    "tree": lambda seed: DecisionTree(),
    "forest": lambda seed: RandomForest(seed=seed),
    "mlp1": lambda seed: MLP((150,), seed=seed),
    "mlp4": lambda seed: MLP((150, 300, 150, 50), seed=seed),
}
