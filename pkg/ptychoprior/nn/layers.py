"""
Layers and Networks
Parameterized blocks with an explicit layer list so training can freeze or
unfreeze whole layers by index.
"""
import copy
import hashlib

import numpy as np

from ptychoprior.errors import ArchitectureMismatchError, DomainError
from ptychoprior.nn import ops
from ptychoprior.nn.tensor import Tensor


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class Layer:
    """One freezable unit; `params` maps short names to Tensors"""

    def __init__(self, name):
        self.name = name
        self.params = {}

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def describe(self):
        shapes = ','.join(f"{k}{tuple(v.shape)}" for k, v in self.params.items())
        return f"{type(self).__name__}({shapes})"

    @property
    def frozen(self):
        return all(not p.requires_grad for p in self.params.values())

    def set_trainable(self, trainable):
        for param in self.params.values():
            param.requires_grad = trainable
            if not trainable:
                param.grad = None


class Dense(Layer):
    def __init__(self, name, in_features, out_features, rng):
        super().__init__(name)
        self.params['weight'] = Tensor(he_normal(rng, (in_features, out_features), in_features),
                                       requires_grad=True, name=f"{name}.weight")
        self.params['bias'] = Tensor(np.zeros(out_features), requires_grad=True, name=f"{name}.bias")

    def forward(self, x):
        return ops.add(ops.matmul(x, self.params['weight']), self.params['bias'])


class Conv3x3(Layer):
    def __init__(self, name, in_channels, out_channels, rng):
        super().__init__(name)
        self.params['weight'] = Tensor(he_normal(rng, (out_channels, in_channels, 3, 3), 9 * in_channels),
                                       requires_grad=True, name=f"{name}.weight")
        self.params['bias'] = Tensor(np.zeros(out_channels), requires_grad=True, name=f"{name}.bias")

    def forward(self, x):
        return ops.conv2d(x, self.params['weight'], self.params['bias'])


class Network:
    """Ordered list of layers; layer index 0 is the shallowest"""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __call__(self, x):
        return self.forward(x)

    @property
    def layer_count(self):
        return len(self.layers)

    def parameters(self, trainable_only=False):
        params = [p for layer in self.layers for p in layer.params.values()]
        if trainable_only:
            params = [p for p in params if p.requires_grad]
        return params

    def named_parameters(self):
        return [(f"{index}.{layer.name}.{key}", param)
                for index, layer in enumerate(self.layers)
                for key, param in layer.params.items()]

    def layer_parameters(self, indices):
        return [p for index in self._check(indices) for p in self.layers[index].params.values()]

    def _check(self, indices):
        indices = sorted(set(indices))
        for index in indices:
            if not 0 <= index < len(self.layers):
                raise DomainError(f"layer index {index} out of range 0..{len(self.layers) - 1}")
        return indices

    def freeze(self, indices):
        for index in self._check(indices):
            self.layers[index].set_trainable(False)

    def unfreeze(self, indices):
        for index in self._check(indices):
            self.layers[index].set_trainable(True)

    def freeze_all(self):
        self.freeze(range(len(self.layers)))

    def unfreeze_all(self):
        self.unfreeze(range(len(self.layers)))

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def architecture(self):
        return ' | '.join(f"{i}:{layer.describe()}" for i, layer in enumerate(self.layers))

    def architecture_hash(self):
        return hashlib.sha256(self.architecture().encode('utf-8')).hexdigest()

    def state_dict(self):
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state):
        named = dict(self.named_parameters())
        if set(named) != set(state):
            missing = sorted(set(named) ^ set(state))
            raise ArchitectureMismatchError(f"parameter names differ: {missing[:5]}")
        for name, param in named.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ArchitectureMismatchError(
                    f"parameter {name}: expected {param.shape}, got {value.shape}")
            param.data = value.copy()
            param.grad = None

    def clone(self):
        return copy.deepcopy(self)
