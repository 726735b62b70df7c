app_name = "robust-renyi"
app_slug = "robust_renyi"
