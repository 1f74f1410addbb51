"""Distributed uplink resource allocation with meta-initialized federated PPO agents.

Subpackages:

* ``channel``   -- seeded radio physics (pathloss, shadowing, fading, SNR, EE)
* ``env``       -- the multi-agent uplink MDP and team reward
* ``net``       -- actor-critic network with hand-written gradients and Adam
* ``ppo``       -- GAE, clipped surrogate, critic loss, minibatch updates
* ``meta``      -- pooled multi-task pre-training of the shared initialization
* ``fed``       -- per-UE adaptation plus federated model averaging
* ``baselines`` -- benchmark variants and exact small-instance oracles
* ``expcli``    -- config files, CSV metrics, the ``fedcell`` CLI
"""

__version__ = "0.1.0"
