from hypothesis import settings

# property tests share CPU with heavy simulation tests; per-example wall
# clock deadlines would only add flakiness
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")
