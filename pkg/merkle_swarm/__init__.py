"""Merkle-tree mission encoding and swarm proof-exchange toolkit."""
