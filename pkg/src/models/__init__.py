"""Models package."""