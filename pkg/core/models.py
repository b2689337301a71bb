from django.db import models


class BaseModel(models.Model):
    is_active = models.BooleanField(default=True)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class PipelineRun(BaseModel):
    """
    One invocation of ``run_pipeline``. The files under ``output_dir`` are
    the source of truth; this row only indexes them. A newer run over the
    same output directory deactivates the older ones.
    """

    STATUS = (
        ("running", "running"),
        ("completed", "completed"),
        ("failed", "failed"),
    )

    config_digest = models.CharField(max_length=64)
    output_dir = models.CharField(max_length=500)
    seed = models.BigIntegerField(default=0)
    goals = models.JSONField(default=list)
    status = models.CharField(max_length=10, choices=STATUS, default="running")
    manifest_path = models.CharField(max_length=500, blank=True)
    failed_stage = models.CharField(max_length=50, blank=True)
    failed_goal = models.CharField(max_length=100, blank=True)
    failure = models.TextField(blank=True)

    class Meta:
        ordering = ["-id"]

    def __str__(self):
        return f"{self.config_digest[:12]} {self.status}"

    def mark_failed(self, stage, goal, cause):
        self.status = "failed"
        self.failed_stage = stage or ""
        self.failed_goal = goal or ""
        self.failure = str(cause)
        self.save()


class StageRun(BaseModel):
    STATUS = (
        ("completed", "completed"),
        ("cached", "cached"),
        ("failed", "failed"),
    )

    run = models.ForeignKey(PipelineRun, on_delete=models.CASCADE, related_name="stages")
    goal = models.CharField(max_length=100, blank=True)
    stage = models.CharField(max_length=50)
    status = models.CharField(max_length=10, choices=STATUS)
    cache_key = models.CharField(max_length=64, blank=True)
    seed = models.BigIntegerField(null=True, blank=True)
    artifacts = models.JSONField(default=dict)
    error = models.TextField(blank=True)

    class Meta:
        ordering = ["id"]

    def __str__(self):
        return f"{self.goal or '*'}/{self.stage} {self.status}"
