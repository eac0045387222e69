"""hrislink: link-level simulation and optimization of hybrid
active-passive RIS assisted MIMO downlinks.

Subpackages: numerics (complex linear algebra), channel (Rician link
generation), env (system model and RL environment), ppo (from-scratch PPO
agent), baselines (water-filling and the alternating-optimization
surrogate), bench (experiment harness and CLI backend).
"""

__version__ = "0.1.0"
