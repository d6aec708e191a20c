# scvae - spatially regularized Gumbel-copula VAE for paired binary outcomes
__version__ = "1.0.0"
