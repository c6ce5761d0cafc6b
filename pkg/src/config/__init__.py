"""Configuration package."""