"""Dense-network substrate: MLPs with hand-written backprop on numpy arrays.

Parameters are stored in float32; softmax-style reductions run in float64.
All randomness flows through explicit numpy Generators so training is
bitwise reproducible for a fixed seed.
"""

import struct

import numpy as np

CHECKPOINT_MAGIC = b"RIALTO-NN"
CHECKPOINT_VERSION = 1


def seeded_generator(*key):
    """Independent Generator for a hashable integer key tuple."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def orthogonal(rows, cols, gain, rng):
    """Orthogonal init (rows x cols), scaled by gain."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    q = q * d
    if rows < cols:
        q = q.T
    return np.ascontiguousarray((gain * q[:rows, :cols]).astype(np.float32))


class Mlp:
    """Fully connected net: tanh on hidden layers, linear (or tanh) output.

    forward() returns (output, cache); backward(cache, dout) returns the
    gradient list aligned with params() plus the gradient w.r.t. the input,
    so nets can be chained (shared trunks, point encoders).
    """

    def __init__(self, sizes, seed=0, tanh_output=False, out_gain=1.0):
        self.sizes = tuple(int(s) for s in sizes)
        self.tanh_output = bool(tanh_output)
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            rng = seeded_generator(seed, i)
            last = i == n_layers - 1
            gain = out_gain if (last and not tanh_output) else np.sqrt(2.0).item()
            self.weights.append(orthogonal(self.sizes[i], self.sizes[i + 1], gain, rng))
            self.biases.append(np.zeros(self.sizes[i + 1], dtype=np.float32))

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def _activated(self, layer_idx):
        return layer_idx < len(self.weights) - 1 or self.tanh_output

    def astype(self, dtype):
        """Copy of the net with parameters cast to dtype (float64 for grad checks)."""
        other = Mlp.__new__(Mlp)
        other.sizes = self.sizes
        other.tanh_output = self.tanh_output
        other.weights = [w.astype(dtype, order="C") for w in self.weights]
        other.biases = [b.astype(dtype, order="C") for b in self.biases]
        return other

    def forward(self, x):
        x = np.asarray(x, dtype=self.weights[0].dtype)
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = np.tanh(z) if self._activated(i) else z
            acts.append(h)
        out = acts[-1][0] if squeeze else acts[-1]
        return out, (acts, squeeze)

    def backward(self, cache, dout):
        acts, squeeze = cache
        d = np.asarray(dout, dtype=acts[0].dtype)
        if squeeze:
            d = d[None, :]
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            a = acts[i + 1]
            if self._activated(i):
                d = d * (1.0 - a * a)
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.weights[i].T
        dinput = d[0] if squeeze else d
        return grads, dinput


def zero_grads(params):
    return [np.zeros_like(p) for p in params]


def accumulate(total, grads, scale=1.0):
    for t, g in zip(total, grads):
        t += (scale * g).astype(t.dtype)


def global_grad_norm(grads):
    acc = 0.0
    for g in grads:
        acc += float(np.sum(g.astype(np.float64) ** 2))
    return float(np.sqrt(acc))


def clip_grad_norm(grads, max_norm):
    """Scale the whole gradient list so its global L2 norm is <= max_norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = np.float32(max_norm / norm)
        for g in grads:
            g *= scale
    return norm


class AdamW:
    """Decoupled weight decay Adam; updates parameters in place."""

    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = float(lr)
        self.b1, self.b2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise ValueError("non-finite gradient")
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.dtype)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            mhat = m / b1t
            vhat = v / b2t
            if self.weight_decay:
                p *= 1.0 - self.lr * self.weight_decay
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def log_softmax(logits):
    """Row-wise log softmax computed in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    return np.exp(log_softmax(logits))


class Categorical:
    """Batch of categorical distributions over action indices."""

    def __init__(self, logits):
        self.logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        self.logp = log_softmax(self.logits)
        self.p = np.exp(self.logp)

    def sample(self, rng):
        u = rng.random(self.p.shape[0])
        cdf = np.cumsum(self.p, axis=-1)
        cdf[:, -1] = 1.0
        return (cdf <= u[:, None]).sum(axis=-1).astype(np.int64)

    def argmax(self):
        return self.logits.argmax(axis=-1)

    def log_prob(self, actions):
        a = np.asarray(actions, dtype=np.int64)
        return self.logp[np.arange(self.logp.shape[0]), a]

    def entropy(self):
        return -(self.p * self.logp).sum(axis=-1)


def write_net(f, net):
    f.write(struct.pack("<I", len(net.weights)))
    for w, b in zip(net.weights, net.biases):
        rows, cols = w.shape
        f.write(struct.pack("<II", rows, cols))
        f.write(w.astype("<f4").tobytes())
        f.write(b.astype("<f4").tobytes())


def read_net(f, tanh_output=False):
    """Read one layer block; the activation flavor is the caller's knowledge."""
    (n_layers,) = struct.unpack("<I", f.read(4))
    weights, biases = [], []
    sizes = None
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", f.read(8))
        w = np.frombuffer(f.read(4 * rows * cols), dtype="<f4").reshape(rows, cols).copy()
        b = np.frombuffer(f.read(4 * cols), dtype="<f4").copy()
        weights.append(w)
        biases.append(b)
        if sizes is None:
            sizes = [rows]
        sizes.append(cols)
    net = Mlp.__new__(Mlp)
    net.sizes = tuple(sizes)
    net.tanh_output = bool(tanh_output)
    net.weights = weights
    net.biases = biases
    return net


def save_net(path, net):
    """Single-network checkpoint: magic, version, then the layer blocks."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        write_net(f, net)


def load_net(path, tanh_output=False):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError("not a network checkpoint: bad magic")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return read_net(f, tanh_output=tanh_output)
