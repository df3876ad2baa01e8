"""AdamW with decoupled weight decay, implemented explicitly.

Decay multiplies the parameter directly by (1 - lr * wd) each step instead of
being folded into the gradient; it is applied to weight matrices only, never
to biases or to the fusion weights, so the fusion prior is not pulled back
toward uniform by regularisation.
"""

from __future__ import annotations

import torch


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


class AdamW(torch.optim.Optimizer):
    def __init__(self, params, lr=1e-4, betas=(0.9, 0.98), eps=1e-8, weight_decay=0.0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not all(0 <= b < 1 for b in betas):
            raise ValueError(f"betas must be in [0, 1), got {betas}")
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = closure() if closure is not None else None
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            lr = group["lr"]
            wd = group["weight_decay"]
            eps = group["eps"]
            names = group.get("names")
            for i, p in enumerate(group["params"]):
                if p.grad is None:
                    continue
                grad = p.grad
                if not torch.isfinite(grad).all():
                    raise NonFiniteGradientError(names[i] if names else f"param{i}")

                state = self.state[p]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(p)
                    state["exp_avg_sq"] = torch.zeros_like(p)
                exp_avg, exp_avg_sq = state["exp_avg"], state["exp_avg_sq"]
                state["step"] += 1
                t = state["step"]

                exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
                exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)

                bias_correction1 = 1 - beta1 ** t
                bias_correction2 = 1 - beta2 ** t
                denom = (exp_avg_sq / bias_correction2).sqrt_().add_(eps)

                if wd != 0:
                    p.mul_(1 - lr * wd)
                p.addcdiv_(exp_avg, denom, value=-lr / bias_correction1)
        return loss


def param_groups(model: torch.nn.Module, weight_decay: float) -> list[dict]:
    """Two groups: 2D+ weight matrices with decay; biases and fusion weights without."""
    decayed, undecayed, decayed_names, undecayed_names = [], [], [], []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        if param.dim() >= 2 and "weight" in name:
            decayed.append(param)
            decayed_names.append(name)
        else:
            undecayed.append(param)
            undecayed_names.append(name)
    groups = []
    if decayed:
        groups.append({"params": decayed, "names": decayed_names, "weight_decay": weight_decay})
    if undecayed:
        groups.append({"params": undecayed, "names": undecayed_names, "weight_decay": 0.0})
    return groups
