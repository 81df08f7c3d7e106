"""MCG grant-free NOMA uplink simulator with a cooperative multi-agent DDQN grant configurator."""

VERSION = "1.0.0"
