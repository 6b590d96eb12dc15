"""Dense-network kernels over a flat parameter vector.

Parameters live in one contiguous float64 vector. Layer ``i`` owns a weight
block of ``dims[i] * dims[i + 1]`` entries starting at ``w_off[i]`` (row-major,
shape ``(fan_in, fan_out)``) followed by a bias block at ``b_off[i]``.

Dropout is driven by caller-supplied uniform draws ``u`` with one column per
unit of every layer (``sum(dims[1:])`` columns); a unit is kept when its draw
is below the layer's keep probability. Passing ``u`` with zero columns turns
dropout off. Keeping randomness outside the kernels makes both backends
consume identical random streams.

Everything here must stay inside the numpy subset numba supports: no ``axis``
argument to ``max``, no boolean-mask assignment, no keyword-heavy calls.
"""

from __future__ import annotations

import numpy as np

from gansense._accel import kernel

ACT_LINEAR = 0
ACT_RELU = 1
ACT_SIGMOID = 2
ACT_SOFTMAX = 3

LOSS_CATEGORICAL = 0
LOSS_SIGMOID = 1

OPT_RMSPROP = 0
OPT_ADAM = 1


@kernel
def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


@kernel
def row_max(z):
    m = z[:, 0].copy()
    for j in range(1, z.shape[1]):
        m = np.maximum(m, z[:, j])
    return m


@kernel
def softmax(z):
    m = row_max(z)
    e = np.exp(z - m.reshape((z.shape[0], 1)))
    s = e.sum(axis=1)
    return e / s.reshape((z.shape[0], 1))


@kernel
def activate(z, act):
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    if act == ACT_SIGMOID:
        return sigmoid(z)
    if act == ACT_SOFTMAX:
        return softmax(z)
    return z.copy()


@kernel
def activation_backward(z, act, da):
    """Map d(loss)/d(activation) to d(loss)/d(pre-activation)."""
    if act == ACT_RELU:
        return da * (z > 0.0)
    if act == ACT_SIGMOID:
        s = sigmoid(z)
        return da * s * (1.0 - s)
    if act == ACT_SOFTMAX:
        p = softmax(z)
        inner = (da * p).sum(axis=1)
        return p * (da - inner.reshape((z.shape[0], 1)))
    return da.copy()


@kernel
def forward(params, dims, acts, keep, w_off, b_off, x, u):
    """Forward pass keeping what backprop needs.

    Returns ``(zs, hs, masks)``: pre-activations per layer, layer inputs and
    the final output (``hs[0] is x``), and scaled dropout masks (empty arrays
    where no dropout applies).
    """
    n_layers = acts.shape[0]
    rows = x.shape[0]
    use_dropout = u.shape[1] > 0
    zs = []
    hs = [x]
    masks = []
    col = 0
    h = x
    for i in range(n_layers):
        din = dims[i]
        dout = dims[i + 1]
        w = params[w_off[i]:w_off[i] + din * dout].reshape((din, dout))
        b = params[b_off[i]:b_off[i] + dout]
        z = np.dot(h, w) + b
        a = activate(z, acts[i])
        if use_dropout and keep[i] < 1.0:
            mask = (u[:, col:col + dout] < keep[i]) / keep[i]
            a = a * mask
        else:
            mask = np.empty((0, 0))
        col += dout
        zs.append(z)
        hs.append(a)
        masks.append(mask)
        h = a
    return zs, hs, masks


@kernel
def predict(params, dims, acts, w_off, b_off, x):
    """Inference-mode forward pass (no dropout, no caches)."""
    h = x
    for i in range(acts.shape[0]):
        din = dims[i]
        dout = dims[i + 1]
        w = params[w_off[i]:w_off[i] + din * dout].reshape((din, dout))
        b = params[b_off[i]:b_off[i] + dout]
        h = activate(np.dot(h, w) + b, acts[i])
    return h


@kernel
def backward(params, dims, acts, w_off, b_off, zs, hs, masks, dz_last):
    """Backpropagate ``dz_last`` (gradient w.r.t. the final pre-activation).

    Returns the flat parameter gradient and the gradient w.r.t. the input.
    """
    grad = np.zeros_like(params)
    dz = dz_last
    dx = np.empty((0, 0))
    for i in range(acts.shape[0] - 1, -1, -1):
        din = dims[i]
        dout = dims[i + 1]
        gw = np.dot(hs[i].T, dz)
        grad[w_off[i]:w_off[i] + din * dout] = gw.ravel()
        grad[b_off[i]:b_off[i] + dout] = dz.sum(axis=0)
        w = params[w_off[i]:w_off[i] + din * dout].reshape((din, dout))
        dh = np.dot(dz, w.T)
        if i == 0:
            dx = dh
        else:
            if masks[i - 1].shape[0] > 0:
                dh = dh * masks[i - 1]
            dz = activation_backward(zs[i - 1], acts[i - 1], dh)
    return grad, dx


@kernel
def loss_from_logits(z, y, loss):
    """Batch-mean loss and its gradient w.r.t. the logits ``z``.

    Categorical cross-entropy goes through log-sum-exp; sigmoid
    cross-entropy through ``max(z, 0) - z*y + log1p(exp(-|z|))``.
    """
    rows = z.shape[0]
    if loss == LOSS_CATEGORICAL:
        m = row_max(z)
        shifted = z - m.reshape((rows, 1))
        lse = m + np.log(np.exp(shifted).sum(axis=1))
        value = np.sum(lse - (y * z).sum(axis=1)) / rows
        dz = (softmax(z) - y) / rows
    else:
        value = np.sum(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))) / rows
        dz = (sigmoid(z) - y) / rows
    return value, dz


@kernel
def loss_and_grad(params, dims, acts, keep, w_off, b_off, x, y, u, loss):
    zs, hs, masks = forward(params, dims, acts, keep, w_off, b_off, x, u)
    value, dz = loss_from_logits(zs[-1], y, loss)
    grad, _ = backward(params, dims, acts, w_off, b_off, zs, hs, masks, dz)
    return value, grad


@kernel
def optimizer_update(params, grad, m, v, step, opt, lr, beta1, beta2, eps):
    """In-place update; ``step`` is the 1-based count including this update.

    RMSprop uses ``beta2`` as its decay and divides by ``sqrt(v + eps)``.
    """
    if opt == OPT_RMSPROP:
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        params -= lr * grad / np.sqrt(v + eps)
    else:
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        params -= lr * m_hat / (np.sqrt(v_hat) + eps)


@kernel
def train_epoch(params, m, v, step, dims, acts, keep, w_off, b_off,
                x, y, perm, u, batch_size, loss, opt, lr, beta1, beta2, eps):
    """One pass over ``x[perm]`` in minibatches; returns (mean loss, step)."""
    n = x.shape[0]
    total = 0.0
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        idx = perm[start:stop]
        xb = x[idx]
        yb = y[idx]
        ub = u[start:stop]
        zs, hs, masks = forward(params, dims, acts, keep, w_off, b_off, xb, ub)
        value, dz = loss_from_logits(zs[-1], yb, loss)
        grad, _ = backward(params, dims, acts, w_off, b_off, zs, hs, masks, dz)
        step += 1
        optimizer_update(params, grad, m, v, step, opt, lr, beta1, beta2, eps)
        total += value * (stop - start)
    return total / n, step


@kernel
def gan_train(g_params, g_m, g_v, g_dims, g_acts, g_keep, g_woff, g_boff,
              d_params, d_m, d_v, d_dims, d_acts, d_keep, d_woff, d_boff,
              step, real, real_idx, noise_d, noise_g, real_label,
              lr, beta1, beta2, eps):
    """Alternating discriminator/generator Adam updates.

    ``real_idx[k]`` picks the real batch for iteration ``k``; ``noise_d[k]``
    and ``noise_g[k]`` are the latent batches for the two half-steps. Returns
    per-iteration discriminator and generator losses and the final step.
    ``real_label`` is the discriminator target for real rows (1.0, or less
    for one-sided label smoothing).
    """
    iters = real_idx.shape[0]
    batch = real_idx.shape[1]
    d_losses = np.zeros(iters)
    g_losses = np.zeros(iters)
    no_drop = np.empty((2 * batch, 0))
    no_drop_half = np.empty((batch, 0))
    targets = np.zeros((2 * batch, 1))
    targets[:batch, 0] = real_label
    ones = np.ones((batch, 1))
    for k in range(iters):
        step += 1
        # discriminator: real -> 1, synthetic -> 0
        fake = predict(g_params, g_dims, g_acts, g_woff, g_boff, noise_d[k])
        xb = np.empty((2 * batch, real.shape[1]))
        xb[:batch] = real[real_idx[k]]
        xb[batch:] = fake
        zs, hs, masks = forward(d_params, d_dims, d_acts, d_keep, d_woff, d_boff, xb, no_drop)
        value, dz = loss_from_logits(zs[-1], targets, LOSS_SIGMOID)
        grad, _ = backward(d_params, d_dims, d_acts, d_woff, d_boff, zs, hs, masks, dz)
        optimizer_update(d_params, grad, d_m, d_v, step, OPT_ADAM, lr, beta1, beta2, eps)
        d_losses[k] = value
        # generator: synthetic -> 1 through the (now fixed) discriminator
        gzs, ghs, gmasks = forward(g_params, g_dims, g_acts, g_keep, g_woff, g_boff,
                                   noise_g[k], no_drop_half)
        zs, hs, masks = forward(d_params, d_dims, d_acts, d_keep, d_woff, d_boff,
                                ghs[-1], no_drop_half)
        value, dz = loss_from_logits(zs[-1], ones, LOSS_SIGMOID)
        _, dx = backward(d_params, d_dims, d_acts, d_woff, d_boff, zs, hs, masks, dz)
        dz_g = activation_backward(gzs[-1], g_acts[g_acts.shape[0] - 1], dx)
        grad, _ = backward(g_params, g_dims, g_acts, g_woff, g_boff, gzs, ghs, gmasks, dz_g)
        optimizer_update(g_params, grad, g_m, g_v, step, OPT_ADAM, lr, beta1, beta2, eps)
        g_losses[k] = value
    return d_losses, g_losses, step
