import inspect


def pytest_pycollect_makeitem(collector, name, obj):
    # Production helpers imported into tests.py (e.g. tuning.grid.test_confirm)
    # match the test_* pattern; only collect functions defined in the module itself.
    if inspect.isfunction(obj) and getattr(collector, "module", None) is not None:
        if obj.__module__ != collector.module.__name__:
            return []
    return None
