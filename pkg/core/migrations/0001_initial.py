# Generated by Django 4.1.5 on 2026-10-18 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="PipelineRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("is_active", models.BooleanField(default=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
                ("config_digest", models.CharField(max_length=64)),
                ("output_dir", models.CharField(max_length=500)),
                ("seed", models.BigIntegerField(default=0)),
                ("goals", models.JSONField(default=list)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("running", "running"),
                            ("completed", "completed"),
                            ("failed", "failed"),
                        ],
                        default="running",
                        max_length=10,
                    ),
                ),
                ("manifest_path", models.CharField(blank=True, max_length=500)),
                ("failed_stage", models.CharField(blank=True, max_length=50)),
                ("failed_goal", models.CharField(blank=True, max_length=100)),
                ("failure", models.TextField(blank=True)),
            ],
            options={
                "ordering": ["-id"],
            },
        ),
        migrations.CreateModel(
            name="StageRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("is_active", models.BooleanField(default=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
                ("goal", models.CharField(blank=True, max_length=100)),
                ("stage", models.CharField(max_length=50)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("completed", "completed"),
                            ("cached", "cached"),
                            ("failed", "failed"),
                        ],
                        max_length=10,
                    ),
                ),
                ("cache_key", models.CharField(blank=True, max_length=64)),
                ("seed", models.BigIntegerField(blank=True, null=True)),
                ("artifacts", models.JSONField(default=dict)),
                ("error", models.TextField(blank=True)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="stages",
                        to="core.pipelinerun",
                    ),
                ),
            ],
            options={
                "ordering": ["id"],
            },
        ),
    ]
