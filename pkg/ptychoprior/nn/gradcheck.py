"""
Finite-Difference Gradient Check
"""
import numpy as np

from ptychoprior.nn.tensor import Tape, backward


def check_gradients(fn, tensors, h=1e-5, samples=16, seed=0, floor=1e-7):
    """
    Compare backward() against central differences

    Args:
        fn: zero-argument callable returning a scalar Tensor built from `tensors`
        tensors: leaf Tensors with requires_grad=True
        h: finite-difference step
        samples: coordinates probed per tensor (all of them if the tensor is smaller)
        floor: denominator floor so vanishing gradients compare absolutely

    Returns:
        Largest relative error over all probed coordinates
    """
    for tensor in tensors:
        tensor.grad = None
    with Tape():
        loss = fn()
        backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    picker = np.random.default_rng(seed)
    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        size = tensor.data.size
        coords = np.arange(size) if size <= samples else picker.choice(size, samples, replace=False)
        for coord in coords:
            original = tensor.data.flat[coord]
            tensor.data.flat[coord] = original + h
            plus = fn().item()
            tensor.data.flat[coord] = original - h
            minus = fn().item()
            tensor.data.flat[coord] = original
            numeric = (plus - minus) / (2.0 * h)
            exact = grad.flat[coord]
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, error)
    return worst
